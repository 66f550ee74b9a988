"""
Configuration for the lump toolkit
Loads defaults from environment variables (optionally from a .env file) and JSON config files
"""

import json
import math
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from exceptions import DataFileError, UsageError

# Load .env on import (if it exists); real environment variables win
load_dotenv(override=False)

TOOL_VERSION = "1.0.0"

# Output / logging
OUTPUT_ROOT = os.getenv("LUMP_OUTPUT_ROOT", "runs")
LOG_LEVEL = os.getenv("LUMP_LOG_LEVEL", "WARNING")

# Grid defaults (DS variables)
GRID_SIZE = int(os.getenv("LUMP_GRID_SIZE", "256"))
BOX_LENGTH = float(os.getenv("LUMP_BOX_LENGTH", str(40 * math.pi)))

# Solver defaults
TOL_RESIDUAL = float(os.getenv("LUMP_TOL_RESIDUAL", "1e-6"))
MAX_ITERS = int(os.getenv("LUMP_MAX_ITERS", "2000"))
RECENTRE_EVERY = int(os.getenv("LUMP_RECENTRE_EVERY", "25"))
STEP_RULE = os.getenv("LUMP_STEP_RULE", "adaptive-BB")
NORM_BOUND = float(os.getenv("LUMP_NORM_BOUND", "1e6"))  # diagnostic only
COLLAPSE_FLOOR = float(os.getenv("LUMP_COLLAPSE_FLOOR", "1e-8"))

# Reduction / wavepacket defaults
DELTA_FRACTION = float(os.getenv("LUMP_DELTA_FRACTION", "0.25"))  # delta = fraction * omega
TRUNCATION_LIMIT = float(os.getenv("LUMP_TRUNCATION_LIMIT", "0.01"))
MAX_PHYSICAL_MODES = int(os.getenv("LUMP_MAX_PHYSICAL_MODES", "4096"))
DEFAULT_EPSILON = 0.05
DEFAULT_EPS_LIST = (0.2, 0.1, 0.05)

# Smooth envelope used by the verifiers when no zeta file is supplied
VERIFY_GRID_SIZE = 64
VERIFY_BOX_LENGTH = 32.0
VERIFY_SIGMA = 2.0
# 1/g~ ~ 1/(1 - Lambda) amplifies the mean flow of F; at beta = 0.25 it is ~17 and
# epsilon = 0.2 .. 0.05 is not yet asymptotic for the quartic checks
VERIFY_BETA = float(os.getenv("LUMP_VERIFY_BETA", "0.1"))

# Profile decomposition
TAIL_FRACTION = 0.5


def get_output_root() -> Path:
    """Default output root (the only setting the CLI takes from the environment)"""
    return Path(OUTPUT_ROOT)


def get_grid_defaults() -> Dict[str, Any]:
    """Default DS grid"""
    return {
        "nx": GRID_SIZE,
        "nz": GRID_SIZE,
        "lx": BOX_LENGTH,
        "lz": BOX_LENGTH,
    }


def get_solver_defaults() -> Dict[str, Any]:
    """Default ground-state solver settings"""
    return {
        "step_rule": STEP_RULE,
        "step_size": 0.5,
        "max_iters": MAX_ITERS,
        "tol_residual": TOL_RESIDUAL,
        "recentre_every": RECENTRE_EVERY,
        "amplitude": 1.0,
        "sigma_x": 1.0,
        "sigma_z": 1.0,
        "seed": 0,
        "perturbation": 0.0,
        "offset": (0, 0),
        "norm_bound": NORM_BOUND,
        "collapse_floor": COLLAPSE_FLOOR,
    }


def get_reduction_defaults() -> Dict[str, Any]:
    """Defaults for wavepacket construction and the expansion verifiers"""
    return {
        "delta_fraction": DELTA_FRACTION,
        "truncation_limit": TRUNCATION_LIMIT,
        "max_modes": MAX_PHYSICAL_MODES,
        "epsilon": DEFAULT_EPSILON,
        "eps_list": list(DEFAULT_EPS_LIST),
        "verify_grid": VERIFY_GRID_SIZE,
        "verify_box": VERIFY_BOX_LENGTH,
        "verify_sigma": VERIFY_SIGMA,
        "verify_beta": VERIFY_BETA,
    }


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    """
    Load a JSON config file

    Args:
        path: Path to a JSON object file, or None

    Returns:
        Dictionary of settings (empty when path is None)
    """
    if path is None:
        return {}
    config_path = Path(path)
    if not config_path.exists():
        raise DataFileError(f"Config file not found: {config_path}")
    try:
        with open(config_path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise UsageError(f"Config file {config_path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise UsageError(f"Config file {config_path} must hold a JSON object")
    return data


def merge_config(base: Dict[str, Any], overrides: Dict[str, Any],
                 allowed: Optional[set] = None) -> Dict[str, Any]:
    """
    Merge config layers; later layers win and None values are ignored

    Args:
        base: Lower-priority settings (defaults, then file values)
        overrides: Higher-priority settings (command-line flags)
        allowed: If given, keys outside this set are rejected

    Returns:
        New merged dictionary
    """
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        merged[key] = value
    if allowed is not None:
        unknown = sorted(set(merged) - set(allowed))
        if unknown:
            raise UsageError(f"Unknown config keys: {', '.join(unknown)}")
    return merged


if __name__ == "__main__":
    print("🔧 Lump toolkit configuration")
    print("=" * 40)
    print(f"Output root: {get_output_root()}")
    print(f"Grid: {get_grid_defaults()}")
    print(f"Solver: {get_solver_defaults()}")
    print(f"Reduction: {get_reduction_defaults()}")
    print("=" * 40)
