"""
Run directories, content hashes and layered configuration.

Every command writes into one run directory holding a manifest.json; data
artifacts are identified by git-style blob hashes so a manifest pins the
exact bytes it was produced from.
"""
import copy
import hashlib
import json
import logging
from datetime import datetime, timezone
from pathlib import Path

import yaml

from .exceptions import ManifestError

logger = logging.getLogger(__name__)

MANIFEST_FILE = 'manifest.json'


def timestamp():
    return datetime.now(timezone.utc).strftime('%Y%m%dT%H%M%S%fZ')


def make_run_dir(root, command, label=None):
    """Create ``root/<timestamp>-<command>[-<label>]``; never reuses a directory."""
    root = Path(root)
    name = f"{timestamp()}-{command}" + (f"-{label}" if label else '')
    run_dir = root / name
    suffix = 1
    while run_dir.exists():
        run_dir = root / f"{name}-{suffix}"
        suffix += 1
    run_dir.mkdir(parents=True)
    return run_dir


def blob_sha1(path):
    """The hash ``git hash-object`` reports for the file."""
    content = Path(path).read_bytes()
    digest = hashlib.sha1(f"blob {len(content)}\0".encode())
    digest.update(content)
    return digest.hexdigest()


def hash_directory(directory, exclude=(MANIFEST_FILE,)):
    """{relative posix path: blob sha1} for every file below ``directory``."""
    directory = Path(directory)
    return {
        path.relative_to(directory).as_posix(): blob_sha1(path)
        for path in sorted(directory.rglob('*'))
        if path.is_file() and path.name not in exclude
    }


def load_config_file(path):
    """YAML or JSON mapping from ``path``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file {path} does not exist")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ValueError(f"Could not parse config file {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"Config file {path} must hold a mapping, got {type(data).__name__}")
    return data


def merge_config(base, *layers):
    """Deep merge: later layers win, nested mappings merge key by key."""
    merged = copy.deepcopy(base)
    for layer in layers:
        for key, value in (layer or {}).items():
            if isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key] = merge_config(merged[key], value)
            else:
                merged[key] = copy.deepcopy(value)
    return merged


def parse_assignment(text):
    """``section.key=value`` (or ``key=value``) -> nested override; the value is read as YAML."""
    if '=' not in text:
        raise ValueError(f"Expected KEY=VALUE, got '{text}'")
    dotted, raw = text.split('=', 1)
    keys = [k for k in dotted.strip().split('.') if k]
    if not keys:
        raise ValueError(f"Empty key in '{text}'")
    value = yaml.safe_load(raw) if raw.strip() else None
    override = value
    for key in reversed(keys):
        override = {key: override}
    return override


def write_manifest(run_dir, manifest):
    path = Path(run_dir) / MANIFEST_FILE
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def read_manifest(run_dir):
    path = Path(run_dir)
    if path.is_dir():
        path = path / MANIFEST_FILE
    if not path.exists():
        raise ManifestError(f"{path} does not exist")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path} is not valid JSON: {exc}") from exc
    for key in ('command', 'config'):
        if key not in manifest:
            raise ManifestError(f"{path} has no '{key}' entry")
    return manifest
