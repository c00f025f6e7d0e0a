"""Run the service: ``python -m clipd`` (env: SCORER_MODEL, SCORER_PORT)."""

import logging
import os

import uvicorn

from .app import create_app


def main() -> None:
    logging.basicConfig(level=logging.INFO)
    port = int(os.environ.get("SCORER_PORT", "8731"))
    uvicorn.run(create_app(), host="127.0.0.1", port=port, log_level="info")


if __name__ == "__main__":
    main()
