import hashlib
import json

from pathlib import Path


def sha256_file(path, bsize=1 << 16):
    h = hashlib.sha256()
    with open(path, 'rb') as fh:
        for data in iter(lambda: fh.read(bsize), b''):
            h.update(data)

    return h.hexdigest()


def sha256_json(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(',', ':')).encode('utf-8')).hexdigest()


def write_json(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write('\n')

    return path


def read_json(path):
    with open(path, 'r') as fh:
        return json.load(fh)