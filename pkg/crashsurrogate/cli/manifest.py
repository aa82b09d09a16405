import time

from dataclasses import dataclass, field
from pathlib import Path

from crashsurrogate import __version__
from crashsurrogate.helpers.io import sha256_file, sha256_json, write_json

MANIFEST_SUFFIX = '.manifest.json'


def _file_hashes(paths):
    retval = {}
    for path in paths:
        path = Path(path)
        if path.is_dir():
            retval.update(_file_hashes(sorted(p for p in path.iterdir() if p.is_file() and not p.name.endswith(MANIFEST_SUFFIX))))
        elif path.is_file():
            retval[str(path)] = sha256_file(path)

    return retval


@dataclass
class RunManifest:
    command: str
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    started: float = field(default_factory=time.perf_counter)

    @property
    def config_hash(self):
        return sha256_json(self.config)

    def to_dict(self):
        return {
            'command': self.command,
            'config': self.config,
            'config_sha256': self.config_hash,
            'seeds': self.seeds,
            'inputs': _file_hashes(self.inputs),
            'outputs': _file_hashes(self.outputs),
            'tool_version': __version__,
            'wall_time_s': time.perf_counter() - self.started,
        }

    def write(self, out_dir):
        return write_json(self.to_dict(), Path(out_dir) / f'{self.command}{MANIFEST_SUFFIX}')
