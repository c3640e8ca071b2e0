"""Built-in tool catalog: registration of every shipped pipeline node.

Image-level tools operate on single artifacts; most have a dataset-level
sibling under medas.dataset.* that maps the same kernel over a named role of
every item, so case-study pipelines can stay straight-line dataset flows.
"""

from __future__ import annotations

import io
from typing import Any, Callable, Mapping

import numpy as np
from PIL import Image as PILImage

from ..graph import ParamSpec, PortSpec, Direction, ResourceRequest, ToolCategory, ToolSpec
from ..registry import RunFn, ToolContext, ToolRegistry
from ..store import ArtifactStore
from ..tensorio import decode_tensor
from ..values import (
    ArtifactVal,
    DatasetItem,
    DatasetManifest,
    DatasetVal,
    FloatVal,
    Media,
    SemanticType,
    TableVal,
    Value,
)
from . import augment as aug
from . import classifier as clf
from . import datasets as ds
from . import metrics as seg_metrics
from . import postprocess as post
from . import preprocess as pre
from . import stain
from . import visualize as vis
from .common import label_components
from .external import run_external_tool

S = SemanticType


def load_array(ctx: ToolContext, port: str) -> np.ndarray:
    """Decode an artifact-typed input port into an ndarray (MDTensor or PNG)."""
    val = ctx.inputs[port]
    if not isinstance(val, ArtifactVal):
        raise TypeError(f"port {port!r} expects an artifact value, got {type(val).__name__}")
    data = ctx.store.get(val.ref)
    if val.ref.media is Media.PNG:
        return np.asarray(PILImage.open(io.BytesIO(data)))
    return decode_tensor(data)


def dataset_of(ctx: ToolContext, port: str = "dataset") -> DatasetManifest:
    val = ctx.inputs[port]
    if not isinstance(val, DatasetVal):
        raise TypeError(f"port {port!r} expects a dataset")
    return val.manifest


def _mk_ports(items: tuple, direction: Direction) -> tuple[PortSpec, ...]:
    out = []
    for it in items:
        name, semantic = it[0], it[1]
        required = it[2] if len(it) > 2 else True
        out.append(PortSpec(name=name, direction=direction, semantic=semantic, required=required))
    return tuple(out)


def _register(
    reg: ToolRegistry,
    tool_id: str,
    category: ToolCategory,
    fn: RunFn,
    params: tuple = (),
    inputs: tuple = (),
    outputs: tuple = (),
    hint: ResourceRequest = ResourceRequest(cpu_cores=1),
    version: str = "1.0.0",
) -> None:
    spec = ToolSpec(
        tool_id=tool_id,
        version=version,
        category=category,
        params=tuple(ParamSpec(*p) for p in params),
        inputs=_mk_ports(inputs, Direction.IN),
        outputs=_mk_ports(outputs, Direction.OUT),
        resource_hint=hint,
    )
    reg.register(spec, fn)


def _metric_outputs(name: str, value: float) -> dict[str, Value]:
    return {
        "value": FloatVal(float(value)),
        "metrics": TableVal(rows=({"metric": name, "value": float(value)},)),
    }


def _item_rng_seeds(ctx: ToolContext, n: int) -> list[int]:
    return [int(ctx.rng.integers(0, 2**63)) for _ in range(n)]


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in text.split(","))


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(part.strip()) for part in text.split(","))


# Individual tool bodies ----------------------------------------------------


def _input_image(ctx: ToolContext) -> Mapping[str, Value]:
    digest = str(ctx.param("artifact"))
    data = ctx.store.get(digest)
    media = Media.PNG if data[:8] == b"\x89PNG\r\n\x1a\n" else Media.MD_TENSOR
    from ..values import ArtifactRef

    ref = ArtifactRef(hash=digest, media=media, size_bytes=len(data))
    return {"image": ArtifactVal(ref=ref, kind=S.IMAGE)}


def _input_dataset(ctx: ToolContext) -> Mapping[str, Value]:
    manifest = ctx.store.get_manifest(str(ctx.param("manifest")))
    return {"dataset": DatasetVal(manifest=manifest)}


def _synthetic_blobs(ctx: ToolContext) -> Mapping[str, Value]:
    manifest = ds.generate_synthetic_dataset(
        ctx.store, int(ctx.param("n_items")), int(ctx.param("seed"))
    )
    return {"dataset": DatasetVal(manifest=manifest)}


def _synthetic_blobs_rgb(ctx: ToolContext) -> Mapping[str, Value]:
    """Blob dataset rendered as stained RGB: intensity drives the first stain."""
    master = np.random.Generator(np.random.PCG64(int(ctx.param("seed"))))
    items = []
    for i in range(int(ctx.param("n_items"))):
        item_rng = np.random.Generator(np.random.PCG64(int(master.integers(0, 2**63))))
        gray, label = ds.synthesize_blob_item(item_rng)
        h_conc = np.clip(gray.astype(np.float64), 0.0, None)
        e_conc = 0.15 + 0.1 * (1.0 - np.clip(gray, 0.0, 1.0))
        od = np.stack([h_conc, e_conc], axis=-1) @ stain._stain_matrix(
            stain.DEFAULT_HEMATOXYLIN_RGB, stain.DEFAULT_EOSIN_RGB
        )
        rgb = np.rint(np.clip(stain.od_to_rgb(od), 0.0, 255.0)).astype(np.uint8)
        img_ref = ctx.store.put_tensor(rgb, S.IMAGE).ref
        lab_ref = ctx.store.put_tensor(label, S.MASK).ref
        items.append(
            DatasetItem(item_id=f"item_{i:03d}", roles={"image": img_ref, "label": lab_ref})
        )
    return {"dataset": DatasetVal(manifest=DatasetManifest(items=tuple(items)))}


def _split(ctx: ToolContext) -> Mapping[str, Value]:
    train, test = ds.dataset_split(
        dataset_of(ctx), float(ctx.param("ratio")), int(ctx.param("seed"))
    )
    return {"train": DatasetVal(manifest=train), "test": DatasetVal(manifest=test)}


def _pick(ctx: ToolContext) -> Mapping[str, Value]:
    manifest = dataset_of(ctx)
    index = int(ctx.param("index"))
    role = str(ctx.param("role"))
    if not 0 <= index < len(manifest.items):
        raise IndexError(f"item index {index} outside dataset of {len(manifest.items)}")
    item = manifest.items[index]
    if role not in item.roles:
        raise KeyError(f"item {item.item_id!r} has no role {role!r}")
    kind = S.MASK if role in ("label", "mask") else S.IMAGE
    return {"image": ArtifactVal(ref=item.roles[role], kind=kind)}


def _image_tool(kernel: Callable[[ToolContext, np.ndarray], np.ndarray], out_kind: S, out_port: str = "image"):
    def run(ctx: ToolContext) -> Mapping[str, Value]:
        arr = load_array(ctx, "image")
        out = kernel(ctx, arr)
        return {out_port: ctx.store.put_tensor(out, out_kind)}

    return run


def _dataset_map_tool(
    kernel: Callable[[ToolContext, np.ndarray], np.ndarray],
    in_role: str = "image",
    out_role: str = "image",
    out_kind: S = S.IMAGE,
):
    def run(ctx: ToolContext) -> Mapping[str, Value]:
        manifest = ds.map_role(
            ctx.store, dataset_of(ctx), in_role, out_role, lambda a: kernel(ctx, a), out_kind
        )
        return {"dataset": DatasetVal(manifest=manifest)}

    return run


def _k_window(ctx: ToolContext, arr: np.ndarray) -> np.ndarray:
    return pre.window_level_rescale(arr, float(ctx.param("width")), float(ctx.param("level")))


def _k_zscore(ctx: ToolContext, arr: np.ndarray) -> np.ndarray:
    return pre.zscore_normalize(arr)


def _k_resample(ctx: ToolContext, arr: np.ndarray) -> np.ndarray:
    return pre.resample(arr, float(ctx.param("factor")), str(ctx.param("mode")))


def _k_foreground(ctx: ToolContext, arr: np.ndarray) -> np.ndarray:
    mask = pre.foreground_mask(arr)
    if not mask.any():
        ctx.warn("foreground_mask: degenerate image produced an empty mask")
    return mask


def _k_stain_normalize(ctx: ToolContext, arr: np.ndarray) -> np.ndarray:
    stats = (
        float(ctx.param("t_mean_l")),
        float(ctx.param("t_mean_a")),
        float(ctx.param("t_mean_b")),
        float(ctx.param("t_std_l")),
        float(ctx.param("t_std_a")),
        float(ctx.param("t_std_b")),
    )
    return stain.reinhard_normalize(arr, stats)


def _k_binary_normalize(ctx: ToolContext, arr: np.ndarray) -> np.ndarray:
    return post.binary_normalize(
        arr,
        strategy=str(ctx.param("strategy")),
        threshold=float(ctx.param("threshold")),
        min_area=int(ctx.param("min_area")),
    )


def _stain_deconvolve_tool(ctx: ToolContext) -> Mapping[str, Value]:
    arr = load_array(ctx, "image")
    h_rgb = _parse_floats(str(ctx.param("h_rgb")))
    e_rgb = _parse_floats(str(ctx.param("e_rgb")))
    h, e = stain.stain_deconvolve(arr, h_rgb, e_rgb)
    return {"h": ctx.store.put_tensor(h, S.IMAGE), "e": ctx.store.put_tensor(e, S.IMAGE)}


def _ds_stain_deconvolve(ctx: ToolContext) -> Mapping[str, Value]:
    h_rgb = _parse_floats(str(ctx.param("h_rgb")))
    e_rgb = _parse_floats(str(ctx.param("e_rgb")))

    def kernel(arr: np.ndarray) -> np.ndarray:
        h, _ = stain.stain_deconvolve(arr, h_rgb, e_rgb)
        return h

    manifest = ds.map_role(ctx.store, dataset_of(ctx), "image", "image", kernel, S.IMAGE)
    return {"dataset": DatasetVal(manifest=manifest)}


def _k_mirror(ctx: ToolContext, arr: np.ndarray) -> np.ndarray:
    return aug.mirror(arr, int(ctx.param("axis")))


def _k_rot90(ctx: ToolContext, arr: np.ndarray) -> np.ndarray:
    return aug.rot90(arr, int(ctx.param("k")))


def _k_crop(ctx: ToolContext, arr: np.ndarray) -> np.ndarray:
    return aug.crop(arr, _parse_ints(str(ctx.param("origin"))), _parse_ints(str(ctx.param("size"))))


def _k_random_crop(ctx: ToolContext, arr: np.ndarray) -> np.ndarray:
    return aug.random_crop(arr, _parse_ints(str(ctx.param("size"))), ctx.rng)


def _k_noise(ctx: ToolContext, arr: np.ndarray) -> np.ndarray:
    return aug.gaussian_noise(arr, float(ctx.param("sigma")), ctx.rng)


def _ds_noise(ctx: ToolContext) -> Mapping[str, Value]:
    manifest = dataset_of(ctx)
    sigma = float(ctx.param("sigma"))
    seeds = _item_rng_seeds(ctx, len(manifest.items))

    items = []
    for item, seed in zip(manifest.items, seeds):
        arr = ctx.store.get_tensor(item.roles["image"])
        rng = np.random.Generator(np.random.PCG64(seed))
        out = aug.gaussian_noise(arr, sigma, rng)
        roles = dict(item.roles)
        roles["image"] = ctx.store.put_tensor(out, S.IMAGE).ref
        items.append(DatasetItem(item_id=item.item_id, roles=roles))
    return {"dataset": DatasetVal(manifest=DatasetManifest(items=tuple(items)))}


def _hp_from_params(ctx: ToolContext) -> clf.HyperParams:
    return clf.HyperParams(
        epochs=int(ctx.param("epochs")),
        learning_rate=float(ctx.param("learning_rate")),
        criterion=str(ctx.param("criterion")),
        model_variant=str(ctx.param("model_variant")),
    )


def _train(ctx: ToolContext) -> Mapping[str, Value]:
    manifest = dataset_of(ctx, "train")
    if not manifest.items:
        raise clf.EmptyDataset("training dataset is empty")
    images = [ctx.store.get_tensor(it.roles["image"]) for it in manifest.items]
    labels = [ctx.store.get_tensor(it.roles["label"]) for it in manifest.items]
    model, curve = clf.train_pixel_classifier(images, labels, _hp_from_params(ctx), ctx.seed)
    blob_ref = ctx.store.put(model.to_blob(), Media.JSON)
    return {
        "model": ArtifactVal(ref=blob_ref, kind=S.MODEL_BLOB),
        "loss": TableVal(rows=tuple(curve)),
    }


def _load_model(ctx: ToolContext, port: str = "model") -> clf.PixelClassifier:
    val = ctx.inputs[port]
    if not isinstance(val, ArtifactVal):
        raise clf.ModelCorrupt("model port expects an artifact")
    return clf.PixelClassifier.from_blob(ctx.store.get(val.ref))


def _predict(ctx: ToolContext) -> Mapping[str, Value]:
    model = _load_model(ctx)
    prob = clf.predict_pixel_classifier(model, load_array(ctx, "image"))
    return {"prob": ctx.store.put_tensor(prob, S.IMAGE)}


def _predict_dataset(ctx: ToolContext) -> Mapping[str, Value]:
    model = _load_model(ctx)

    def kernel(arr: np.ndarray) -> np.ndarray:
        return clf.predict_pixel_classifier(model, arr).astype(np.float32)

    manifest = ds.map_role(ctx.store, dataset_of(ctx), "image", "prob", kernel, S.IMAGE)
    return {"dataset": DatasetVal(manifest=manifest)}


def _dice(ctx: ToolContext) -> Mapping[str, Value]:
    value = seg_metrics.dice_score(load_array(ctx, "pred"), load_array(ctx, "gt"))
    return _metric_outputs("dice", value)


def _aji(ctx: ToolContext) -> Mapping[str, Value]:
    value = seg_metrics.aji_score(load_array(ctx, "pred"), load_array(ctx, "gt"))
    return _metric_outputs("aji", value)


def _pairs(ctx: ToolContext) -> list[tuple[np.ndarray, np.ndarray]]:
    manifest = dataset_of(ctx)
    pred_role = str(ctx.param("pred_role"))
    gt_role = str(ctx.param("gt_role"))
    out = []
    for item in manifest.items:
        out.append(
            (ctx.store.get_tensor(item.roles[pred_role]), ctx.store.get_tensor(item.roles[gt_role]))
        )
    return out


def _mean_dice(ctx: ToolContext) -> Mapping[str, Value]:
    scores = [seg_metrics.dice_score(p, g) for p, g in _pairs(ctx)]
    return _metric_outputs("mean_dice", float(np.mean(scores)) if scores else 0.0)


def _mean_aji(ctx: ToolContext) -> Mapping[str, Value]:
    scores = []
    for p, g in _pairs(ctx):
        scores.append(seg_metrics.aji_score(label_components(p), label_components(g)))
    return _metric_outputs("mean_aji", float(np.mean(scores)) if scores else 0.0)


def _result_table(ctx: ToolContext) -> Mapping[str, Value]:
    manifest = dataset_of(ctx)
    pred_role = str(ctx.param("pred_role"))
    gt_role = str(ctx.param("gt_role"))
    rows = []
    for item in manifest.items:
        d = seg_metrics.dice_score(
            ctx.store.get_tensor(item.roles[pred_role]), ctx.store.get_tensor(item.roles[gt_role])
        )
        rows.append({"item_id": item.item_id, "dice": d})
    return {"table": TableVal(rows=tuple(rows))}


def _label_components_tool(ctx: ToolContext) -> Mapping[str, Value]:
    labels = label_components(load_array(ctx, "mask"))
    return {"labels": ctx.store.put_tensor(labels, S.LABEL_MAP)}


def _overlay(ctx: ToolContext) -> Mapping[str, Value]:
    png = vis.overlay_png(load_array(ctx, "image"), load_array(ctx, "mask"))
    ref = ctx.store.put(png, Media.PNG)
    return {"overlay": ArtifactVal(ref=ref, kind=S.IMAGE)}


def _dataset_overlay(ctx: ToolContext) -> Mapping[str, Value]:
    manifest = dataset_of(ctx)
    mask_role = str(ctx.param("mask_role"))
    items = []
    for item in manifest.items:
        img = ctx.store.get_tensor(item.roles["image"])
        mask = ctx.store.get_tensor(item.roles[mask_role])
        png = vis.overlay_png(img, mask)
        roles = dict(item.roles)
        roles["overlay"] = ctx.store.put(png, Media.PNG)
        items.append(DatasetItem(item_id=item.item_id, roles=roles))
    return {"dataset": DatasetVal(manifest=DatasetManifest(items=tuple(items)))}


def _loss_curve(ctx: ToolContext) -> Mapping[str, Value]:
    table = ctx.inputs["loss"]
    if not isinstance(table, TableVal):
        raise TypeError("loss port expects a table")
    png = vis.loss_curve_png(list(table.rows))
    return {"chart": ArtifactVal(ref=ctx.store.put(png, Media.PNG), kind=S.IMAGE)}


def _occlusion(ctx: ToolContext) -> Mapping[str, Value]:
    model = _load_model(ctx)
    gt = load_array(ctx, "gt") if "gt" in ctx.inputs else None
    heat = vis.occlusion_sensitivity(
        model,
        load_array(ctx, "image"),
        block=int(ctx.param("block")),
        stride=int(ctx.param("stride")),
        scorer=str(ctx.param("scorer")),
        gt=gt,
    )
    return {"heatmap": ctx.store.put_tensor(heat.astype(np.float32), S.IMAGE)}


# Registry assembly ----------------------------------------------------------


def build_default_registry() -> ToolRegistry:
    reg = ToolRegistry()
    C = ToolCategory

    _register(
        reg, "medas.input.image", C.INPUT, _input_image,
        params=(("artifact", S.TEXT),),
        outputs=(("image", S.IMAGE),),
    )
    _register(
        reg, "medas.input.dataset", C.INPUT, _input_dataset,
        params=(("manifest", S.TEXT),),
        outputs=(("dataset", S.DATASET),),
    )
    _register(
        reg, "medas.dataset.synthetic_blobs", C.DATASET_MGMT, _synthetic_blobs,
        params=(("n_items", S.INT, 12, (2, 10000)), ("seed", S.INT, 0)),
        outputs=(("dataset", S.DATASET),),
    )
    _register(
        reg, "medas.dataset.synthetic_blobs_rgb", C.DATASET_MGMT, _synthetic_blobs_rgb,
        params=(("n_items", S.INT, 12, (2, 10000)), ("seed", S.INT, 0)),
        outputs=(("dataset", S.DATASET),),
    )
    _register(
        reg, "medas.dataset.split", C.DATASET_MGMT, _split,
        params=(("ratio", S.FLOAT, 0.75), ("seed", S.INT, 0)),
        inputs=(("dataset", S.DATASET),),
        outputs=(("train", S.DATASET), ("test", S.DATASET)),
    )
    _register(
        reg, "medas.dataset.pick", C.DATASET_MGMT, _pick,
        params=(("index", S.INT, 0, (0, 10**9)), ("role", S.TEXT, "image")),
        inputs=(("dataset", S.DATASET),),
        outputs=(("image", S.IMAGE),),
    )

    window_params = (("width", S.FLOAT, 400.0), ("level", S.FLOAT, 0.0))
    _register(
        reg, "medas.image.window_level", C.PRE_PROCESS, _image_tool(_k_window, S.IMAGE),
        params=window_params,
        inputs=(("image", S.IMAGE),), outputs=(("image", S.IMAGE),),
    )
    _register(
        reg, "medas.dataset.window_level", C.PRE_PROCESS, _dataset_map_tool(_k_window),
        params=window_params,
        inputs=(("dataset", S.DATASET),), outputs=(("dataset", S.DATASET),),
    )
    _register(
        reg, "medas.image.zscore", C.PRE_PROCESS, _image_tool(_k_zscore, S.IMAGE),
        inputs=(("image", S.IMAGE),), outputs=(("image", S.IMAGE),),
    )
    _register(
        reg, "medas.dataset.zscore", C.PRE_PROCESS, _dataset_map_tool(_k_zscore),
        inputs=(("dataset", S.DATASET),), outputs=(("dataset", S.DATASET),),
    )
    resample_params = (
        ("factor", S.FLOAT, 1.0),
        ("mode", S.TEXT, "linear", ("nearest", "linear")),
    )
    _register(
        reg, "medas.image.resample", C.PRE_PROCESS, _image_tool(_k_resample, S.IMAGE),
        params=resample_params,
        inputs=(("image", S.IMAGE),), outputs=(("image", S.IMAGE),),
    )

    def _ds_resample(ctx: ToolContext) -> Mapping[str, Value]:
        manifest = dataset_of(ctx)
        factor = float(ctx.param("factor"))
        mode = str(ctx.param("mode"))
        items = []
        for item in manifest.items:
            roles = dict(item.roles)
            img = ctx.store.get_tensor(item.roles["image"])
            roles["image"] = ctx.store.put_tensor(pre.resample(img, factor, mode), S.IMAGE).ref
            if "label" in roles:
                lab = ctx.store.get_tensor(item.roles["label"])
                # Labels resample with nearest so the mask contract survives.
                roles["label"] = ctx.store.put_tensor(
                    pre.resample(lab, factor, "nearest"), S.MASK
                ).ref
            items.append(DatasetItem(item_id=item.item_id, roles=roles))
        return {"dataset": DatasetVal(manifest=DatasetManifest(items=tuple(items)))}

    _register(
        reg, "medas.dataset.resample", C.PRE_PROCESS, _ds_resample,
        params=resample_params,
        inputs=(("dataset", S.DATASET),), outputs=(("dataset", S.DATASET),),
    )
    _register(
        reg, "medas.image.foreground_mask", C.PRE_PROCESS, _image_tool(_k_foreground, S.MASK, "mask"),
        inputs=(("image", S.IMAGE),), outputs=(("mask", S.MASK),),
    )
    _register(
        reg, "medas.dataset.foreground_mask", C.PRE_PROCESS,
        _dataset_map_tool(_k_foreground, out_role="mask", out_kind=S.MASK),
        inputs=(("dataset", S.DATASET),), outputs=(("dataset", S.DATASET),),
    )
    stain_params = (
        ("t_mean_l", S.FLOAT, 60.0), ("t_mean_a", S.FLOAT, 15.0), ("t_mean_b", S.FLOAT, -10.0),
        ("t_std_l", S.FLOAT, 12.0), ("t_std_a", S.FLOAT, 6.0), ("t_std_b", S.FLOAT, 6.0),
    )
    _register(
        reg, "medas.image.stain_normalize", C.PRE_PROCESS, _image_tool(_k_stain_normalize, S.IMAGE),
        params=stain_params,
        inputs=(("image", S.IMAGE),), outputs=(("image", S.IMAGE),),
    )
    _register(
        reg, "medas.dataset.stain_normalize", C.PRE_PROCESS, _dataset_map_tool(_k_stain_normalize),
        params=stain_params,
        inputs=(("dataset", S.DATASET),), outputs=(("dataset", S.DATASET),),
    )
    he_params = (
        ("h_rgb", S.TEXT, "0.65,0.70,0.29"),
        ("e_rgb", S.TEXT, "0.07,0.99,0.11"),
    )
    _register(
        reg, "medas.image.stain_deconvolve", C.PRE_PROCESS, _stain_deconvolve_tool,
        params=he_params,
        inputs=(("image", S.IMAGE),), outputs=(("h", S.IMAGE), ("e", S.IMAGE)),
    )
    _register(
        reg, "medas.dataset.stain_deconvolve", C.PRE_PROCESS, _ds_stain_deconvolve,
        params=he_params,
        inputs=(("dataset", S.DATASET),), outputs=(("dataset", S.DATASET),),
    )

    _register(
        reg, "medas.augment.mirror", C.AUGMENT, _image_tool(_k_mirror, S.IMAGE),
        params=(("axis", S.INT, 0, (0, 3)),),
        inputs=(("image", S.IMAGE),), outputs=(("image", S.IMAGE),),
    )
    _register(
        reg, "medas.augment.rot90", C.AUGMENT, _image_tool(_k_rot90, S.IMAGE),
        params=(("k", S.INT, 1),),
        inputs=(("image", S.IMAGE),), outputs=(("image", S.IMAGE),),
    )
    _register(
        reg, "medas.augment.crop", C.AUGMENT, _image_tool(_k_crop, S.IMAGE),
        params=(("origin", S.TEXT, "0,0"), ("size", S.TEXT, "1,1")),
        inputs=(("image", S.IMAGE),), outputs=(("image", S.IMAGE),),
    )
    _register(
        reg, "medas.augment.random_crop", C.AUGMENT, _image_tool(_k_random_crop, S.IMAGE),
        params=(("size", S.TEXT, "1,1"),),
        inputs=(("image", S.IMAGE),), outputs=(("image", S.IMAGE),),
    )
    _register(
        reg, "medas.augment.gaussian_noise", C.AUGMENT, _image_tool(_k_noise, S.IMAGE),
        params=(("sigma", S.FLOAT, 0.05, (0.0, 1e9)),),
        inputs=(("image", S.IMAGE),), outputs=(("image", S.IMAGE),),
    )
    _register(
        reg, "medas.dataset.gaussian_noise", C.AUGMENT, _ds_noise,
        params=(("sigma", S.FLOAT, 0.05, (0.0, 1e9)),),
        inputs=(("dataset", S.DATASET),), outputs=(("dataset", S.DATASET),),
    )

    train_params = (
        ("epochs", S.INT, 50, (1, 100000)),
        ("learning_rate", S.FLOAT, 0.1, (1e-12, 1e6)),
        ("criterion", S.TEXT, "bce", clf.CRITERIA),
        ("model_variant", S.TEXT, "linear", clf.VARIANTS),
    )
    _register(
        reg, "medas.model.train", C.MODEL, _train,
        params=train_params,
        inputs=(("train", S.DATASET),),
        outputs=(("model", S.MODEL_BLOB), ("loss", S.TABLE)),
        hint=ResourceRequest(cpu_cores=1, mem_mb=512),
    )
    _register(
        reg, "medas.model.predict", C.MODEL, _predict,
        inputs=(("model", S.MODEL_BLOB), ("image", S.IMAGE)),
        outputs=(("prob", S.IMAGE),),
    )
    _register(
        reg, "medas.model.predict_dataset", C.MODEL, _predict_dataset,
        inputs=(("model", S.MODEL_BLOB), ("dataset", S.DATASET)),
        outputs=(("dataset", S.DATASET),),
    )

    bn_params = (
        ("strategy", S.TEXT, "fixed", ("fixed", "otsu")),
        ("threshold", S.FLOAT, 0.5, (0.0, 1.0)),
        ("min_area", S.INT, post.DEFAULT_MIN_AREA, (0, 10**9)),
    )
    _register(
        reg, "medas.post.binary_normalize", C.POST_PROCESS,
        _image_tool(_k_binary_normalize, S.MASK, "mask"),
        params=bn_params,
        inputs=(("prob", S.IMAGE),), outputs=(("mask", S.MASK),),
    )
    _register(
        reg, "medas.dataset.binary_normalize", C.POST_PROCESS,
        _dataset_map_tool(_k_binary_normalize, in_role="prob", out_role="mask", out_kind=S.MASK),
        params=bn_params,
        inputs=(("dataset", S.DATASET),), outputs=(("dataset", S.DATASET),),
    )
    _register(
        reg, "medas.post.label_components", C.POST_PROCESS, _label_components_tool,
        inputs=(("mask", S.MASK),), outputs=(("labels", S.LABEL_MAP),),
    )

    role_params = (("pred_role", S.TEXT, "mask"), ("gt_role", S.TEXT, "label"))
    _register(
        reg, "medas.metric.dice", C.METRIC, _dice,
        inputs=(("pred", S.MASK), ("gt", S.MASK)),
        outputs=(("value", S.FLOAT), ("metrics", S.TABLE)),
    )
    _register(
        reg, "medas.metric.aji", C.METRIC, _aji,
        inputs=(("pred", S.LABEL_MAP), ("gt", S.LABEL_MAP)),
        outputs=(("value", S.FLOAT), ("metrics", S.TABLE)),
    )
    _register(
        reg, "medas.metric.mean_dice", C.METRIC, _mean_dice,
        params=role_params,
        inputs=(("dataset", S.DATASET),),
        outputs=(("value", S.FLOAT), ("metrics", S.TABLE)),
    )
    _register(
        reg, "medas.metric.mean_aji", C.METRIC, _mean_aji,
        params=role_params,
        inputs=(("dataset", S.DATASET),),
        outputs=(("value", S.FLOAT), ("metrics", S.TABLE)),
    )
    _register(
        reg, "medas.metric.result_table", C.METRIC, _result_table,
        params=role_params,
        inputs=(("dataset", S.DATASET),),
        outputs=(("table", S.TABLE),),
    )

    _register(
        reg, "medas.visualize.overlay", C.VISUALIZE, _overlay,
        inputs=(("image", S.IMAGE), ("mask", S.MASK)),
        outputs=(("overlay", S.IMAGE),),
    )
    _register(
        reg, "medas.visualize.dataset_overlay", C.VISUALIZE, _dataset_overlay,
        params=(("mask_role", S.TEXT, "mask"),),
        inputs=(("dataset", S.DATASET),), outputs=(("dataset", S.DATASET),),
    )
    _register(
        reg, "medas.visualize.loss_curve", C.VISUALIZE, _loss_curve,
        inputs=(("loss", S.TABLE),), outputs=(("chart", S.IMAGE),),
    )
    _register(
        reg, "medas.visualize.occlusion", C.VISUALIZE, _occlusion,
        params=(
            ("block", S.INT, 16, (1, 10**6)),
            ("stride", S.INT, 8, (1, 10**6)),
            ("scorer", S.TEXT, "mean_prob", ("mean_prob", "dice_vs")),
        ),
        inputs=(("model", S.MODEL_BLOB), ("image", S.IMAGE), ("gt", S.MASK, False)),
        outputs=(("heatmap", S.IMAGE),),
    )
    return reg


def register_external_tool(reg: ToolRegistry, spec: ToolSpec, timeout_s: float = 3600.0) -> None:
    """Add a subprocess-backed tool; the engine drives it over the wire protocol."""
    if not spec.executable:
        raise ValueError("external tool spec must declare an executable")

    def run(ctx: ToolContext) -> Mapping[str, Value]:
        return run_external_tool(spec, ctx, timeout_s=timeout_s)

    reg.register(spec, run)
