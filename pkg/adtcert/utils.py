"""
Output helpers: results directory, plain records and YAML reports
"""

import logging
import os
import platform
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

logger = logging.getLogger(__name__)

DEFAULT_RESULTS_DIR = './adtcert_results'


def to_plain(value):
    """Recursively convert numpy containers and scalars into YAML/JSON-safe Python values"""
    if isinstance(value, dict):
        return {(k.item() if isinstance(k, np.generic) else k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def get_results_dir(out=None):
    """
    Absolute path to the results directory, created on demand

    Args:
        out: explicit directory (--out); ADTCERT_OUTPUT_DIR or ./adtcert_results otherwise

    Returns:
        Path
    """
    root = out or os.environ.get('ADTCERT_OUTPUT_DIR') or DEFAULT_RESULTS_DIR
    results_dir = Path(root).resolve()
    try:
        results_dir.mkdir(parents=True, exist_ok=True)
        logger.debug(f"Using results directory: {results_dir}")
    except OSError as e:
        logger.error(f"Failed to create results directory {results_dir}: {e}")
        raise
    return results_dir


def run_metadata(seed=None, **extra):
    """Seed, versions and timestamp recorded next to every report"""
    from adtcert import VERSION
    import scipy

    meta = {
        'adtcert_version': VERSION,
        'python': platform.python_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'created': datetime.now(timezone.utc).strftime('%Y-%m-%dT%H:%M:%SZ'),
    }
    if seed is not None:
        meta['seed'] = int(seed)
    meta.update(extra)
    return to_plain(meta)


def write_report(name, record, out_dir=None):
    """
    Write `<name>_report.yaml` into the results directory

    Returns:
        Path of the written file
    """
    path = get_results_dir(out_dir) / f"{name}_report.yaml"
    with open(path, 'w') as f:
        yaml.safe_dump(to_plain(record), f, sort_keys=False, allow_unicode=True)
    logger.info(f"Report written to {path}")
    return path


def load_yaml(path):
    with open(path) as f:
        return yaml.safe_load(f)


def format_duration(seconds):
    """Human-readable duration"""
    if seconds is None:
        return 'N/A'
    if seconds < 1.0:
        return f"{seconds * 1000:.0f}ms"
    if seconds < 60.0:
        return f"{seconds:.1f}s"
    minutes, secs = divmod(int(seconds), 60)
    return f"{minutes}m {secs}s"
