"""Engine configuration: backend endpoint, sandbox command, data directory.

Secrets travel only through environment variables; the config holds the
variable names, never the values.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .backend import HttpBackend, ModelBackend, ScriptedBackend
from .orchestrator import ToolRegistry
from .prompts import PromptProfiles
from .sandbox import SandboxConfig, SandboxExecutor


class ConfigError(ValueError):
    pass


@dataclass
class EngineConfig:
    backend_url: str = ""
    backend_model: str = "default"
    backend_token_env: str = "ENGINE_BACKEND_TOKEN"
    backend_script: Optional[Path] = None
    sandbox_command: str = ""
    data_dir: Path = field(default_factory=lambda: Path("data"))
    prompt_profiles_dir: Optional[Path] = None
    max_sessions: int = 8
    exec_time_limit: float = 10.0
    exec_memory_mb: int = 512
    exec_output_kb: int = 64

    @classmethod
    def from_env(cls, **overrides) -> "EngineConfig":
        cfg = cls(
            backend_url=os.environ.get("ENGINE_BACKEND_URL", ""),
            sandbox_command=os.environ.get("ENGINE_SANDBOX_CMD", ""),
        )
        script = os.environ.get("ENGINE_BACKEND_SCRIPT", "")
        if script:
            cfg.backend_script = Path(script)
        data_dir = os.environ.get("ENGINE_DATA_DIR", "")
        if data_dir:
            cfg.data_dir = Path(data_dir)
        for key, value in overrides.items():
            if value is not None:
                setattr(cfg, key, value)
        return cfg

    def validate(self) -> None:
        if self.backend_script is not None and not Path(self.backend_script).exists():
            raise ConfigError(f"backend script not found: {self.backend_script}")
        if self.max_sessions < 0:
            raise ConfigError("max_sessions must be >= 0")
        if min(self.exec_time_limit, self.exec_memory_mb, self.exec_output_kb) <= 0:
            raise ConfigError("sandbox limits must be positive")

    @property
    def backend_configured(self) -> bool:
        return bool(self.backend_url) or self.backend_script is not None

    def make_backend(self) -> ModelBackend:
        """Fresh backend per session; scripted backends are single-use."""
        if self.backend_script is not None:
            return ScriptedBackend.from_file(self.backend_script)
        if self.backend_url:
            return HttpBackend(
                url=self.backend_url,
                model=self.backend_model,
                token_env=self.backend_token_env,
            )
        raise ConfigError(
            "no model backend configured (set ENGINE_BACKEND_URL or ENGINE_BACKEND_SCRIPT)"
        )

    def make_sandbox(self) -> SandboxExecutor:
        if self.sandbox_command:
            sandbox_config = SandboxConfig.from_command_string(self.sandbox_command)
        else:
            sandbox_config = SandboxConfig()
        return SandboxExecutor(sandbox_config)

    def make_tools(self, sandbox: Optional[SandboxExecutor] = None) -> ToolRegistry:
        return ToolRegistry(
            sandbox=sandbox or self.make_sandbox(),
            time_limit=self.exec_time_limit,
            memory_limit_mb=self.exec_memory_mb,
            output_limit_kb=self.exec_output_kb,
        )

    def make_profiles(self) -> PromptProfiles:
        return PromptProfiles(self.prompt_profiles_dir)
