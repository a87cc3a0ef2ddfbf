# src/app_state.py

from typing import Optional

from src.image.pool import DependencyPool
from src.protocol.page_server import ServerHandle

pool: DependencyPool = DependencyPool()
page_server: Optional[ServerHandle] = None
