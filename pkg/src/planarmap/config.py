"""Runtime configuration: thresholds, retention policy, threading knobs.

Config files are `key = value` lines with `#` comments; keys match the field
names below. seed_retention accepts an integer number of scans or "all".
"""
from __future__ import annotations

from dataclasses import dataclass, fields

RETENTION_ALL = -1


@dataclass
class Config:
    sigma_noise: float = 0.01        # m, range-axis sensor noise
    z_crit: float = 1.96             # critical value of the position test
    r_max: float = 1.0               # m, cap on per-vertex curvature radius
    a_min: float = 0.01              # m^2, below this a planar-mesh is a seed
    fat_margin: float = 0.05         # m, BVH leaf inflation
    seed_retention: int = RETENTION_ALL   # scans to keep seeds; -1 = all
    threads: int = 1
    deterministic: bool = True
    reproject_angle_deg: float = 0.5  # refit rotation forcing immediate snap
    reproject_offset: float = 1e-6    # m, on-plane tolerance at scan ends
    midscan_offplane_slack: float = 2e-3  # m, drift allowed between snaps
    endpoint_slack: float = -1.0      # m, ray hits past the endpoint; <0 = auto
    min_split_edge: float = -1.0      # m, no refinement splits below; <0 = auto
    cos_grazing: float = 0.0175
    emit_seed_vertices: bool = False  # include faceless seeds in mesh output

    def __post_init__(self):
        if self.endpoint_slack < 0.0:
            self.endpoint_slack = self.z_crit * self.sigma_noise
        if self.min_split_edge < 0.0:
            # features below the noise floor are not worth tessellating
            self.min_split_edge = 4.0 * self.sigma_noise
        self.validate()

    def validate(self):
        for name in ("sigma_noise", "z_crit", "r_max", "a_min", "fat_margin"):
            if getattr(self, name) <= 0:
                raise ValueError(f"config {name} must be positive")
        if self.threads < 1:
            raise ValueError("config threads must be >= 1")
        if self.seed_retention < RETENTION_ALL:
            raise ValueError("config seed_retention must be >= 0 or 'all'")


def _parse_value(name: str, text: str, kind: type):
    text = text.strip()
    if name == "seed_retention" and text.lower() == "all":
        return RETENTION_ALL
    if kind is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"bad boolean {text!r} for {name}")
    return kind(text)


def parse_config(text: str) -> Config:
    known = {f.name: f.type for f in fields(Config)}
    types = {"float": float, "int": int, "bool": bool}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, val, types[known[key]])
    return Config(**values)


def load_config(path) -> Config:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(cfg: Config) -> str:
    lines = []
    for f in fields(Config):
        v = getattr(cfg, f.name)
        if f.name == "seed_retention" and v == RETENTION_ALL:
            v = "all"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
