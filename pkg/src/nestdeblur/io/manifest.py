"""Tab-separated manifests.

The first line holds tab-separated ``key=value`` global parameters; every
following line is ``sharp_path<TAB>blurred_path<TAB>z<TAB>seed`` with
paths relative to the manifest's directory.
"""
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError, DataError, FormatError


@dataclass(frozen=True)
class ManifestRecord:
    sharp: str
    blurred: str
    z: float
    seed: int


@dataclass
class SyntheticManifest:
    records: list
    params: dict = field(default_factory=dict)
    root: Path = Path(".")


@dataclass(frozen=True)
class DatasetRecord:
    input: str
    target: str
    index: int
    split: str


@dataclass
class DatasetManifest:
    records: list

    @property
    def train(self):
        return [r for r in self.records if r.split == "train"]

    @property
    def test(self):
        return [r for r in self.records if r.split == "test"]


def write_manifest(manifest, path):
    header = "\t".join(f"{k}={'' if v is None else v}" for k, v in manifest.params.items())
    lines = [header]
    for r in manifest.records:
        lines.append(f"{r.sharp}\t{r.blurred}\t{r.z!r}\t{r.seed}")
    tmp = Path(path).with_suffix(".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(path)


def read_manifest(path):
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if not lines:
        raise FormatError(f"empty manifest {path}")
    params = {}
    for item in filter(None, lines[0].split("\t")):
        key, sep, value = item.partition("=")
        if not sep:
            raise FormatError(f"{path}: header item {item!r} is not key=value")
        params[key] = value
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise FormatError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
        try:
            records.append(ManifestRecord(parts[0], parts[1], float(parts[2]), int(parts[3])))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return SyntheticManifest(records, params, path.parent)


def split_manifest(items, train_count):
    """Positional split after a stable lexicographic sort.

    ``items`` are input paths or ``(input, target)`` pairs. The first
    ``train_count`` sorted records are tagged ``train``, the rest ``test``.
    """
    pairs = [(it, it) if isinstance(it, (str, Path)) else tuple(it) for it in items]
    if train_count < 0 or train_count > len(pairs):
        raise ConfigError(f"train_count {train_count} outside 0..{len(pairs)}")
    pairs = sorted(((str(a), str(b)) for a, b in pairs))
    return DatasetManifest([
        DatasetRecord(a, b, i, "train" if i < train_count else "test") for i, (a, b) in enumerate(pairs)
    ])
