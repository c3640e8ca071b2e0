"""Entry point: `python -m medas.service` starts the HTTP server.

Environment:
    MEDAS_DATA_DIR     data directory (default ./medas-data)
    MEDAS_BIND_ADDR    host:port (default 127.0.0.1:8100)
    MEDAS_INVENTORY    JSON {"cpu_cores": N, "gpus": N, "mem_mb": N}
    MEDAS_TOKENS_FILE  accounts file; auto-created with one account if absent
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import uvicorn

from ..scheduler import Inventory
from .app import create_app
from .state import ServiceState, bootstrap_tokens_file, load_accounts


def main() -> None:
    data_dir = Path(os.environ.get("MEDAS_DATA_DIR", "./medas-data"))
    bind = os.environ.get("MEDAS_BIND_ADDR", "127.0.0.1:8100")
    host, _, port = bind.rpartition(":")
    inventory_json = os.environ.get("MEDAS_INVENTORY")
    if inventory_json:
        inventory = Inventory.from_json(json.loads(inventory_json))
    else:
        inventory = Inventory.of(cpu_cores=os.cpu_count() or 4, gpus=2, mem_mb=8192)
    tokens_path = Path(os.environ.get("MEDAS_TOKENS_FILE", data_dir / "tokens.json"))
    if not tokens_path.exists():
        token = bootstrap_tokens_file(tokens_path, inventory)
        print(f"created {tokens_path} with account 'local', token: {token}", file=sys.stderr)
    accounts = load_accounts(tokens_path)
    state = ServiceState(data_dir, inventory=inventory, accounts=accounts)
    app = create_app(state)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")


if __name__ == "__main__":
    main()
