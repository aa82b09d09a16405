"""
Versioned binary container for a set of trajectories that share one mesh topology.

Layout, little-endian throughout::

    header      struct '<4sHBIIIdIHH': magic b'CSTR', version, dim, node_count, edge_count,
                T (transitions), dt, trajectory count, static feature count, design variable count
    schema      u4 byte length + UTF-8 JSON (design variable names, static feature count)
    edges       edge_count x 2 u4
    roles       node_count u1
    per trajectory:
      sample_id       u4
      design          n_design f8
      survival pair   2 u4
      static          node_count x n_static f8
      velocity v_0    node_count x dim f8
      positions       (T+1) x node_count x dim f8

Frame 0 of every trajectory doubles as its reference geometry. A JSON sidecar
`<file>.json` mirrors the header for inspection.
"""
import json
import logging
import struct

import numpy as np

from pathlib import Path

from crashsurrogate.helpers.errors import ContainerFormatError
from crashsurrogate.helpers.io import write_json
from crashsurrogate.mesh.graph import MeshGraph, Trajectory
from crashsurrogate.oracle.design import DesignSample

log = logging.getLogger(__name__)

MAGIC = b'CSTR'
FORMAT_VERSION = 1
HEADER = struct.Struct('<4sHBIIIdIHH')
U4 = struct.Struct('<I')


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + '.json')


def _check_shared(trajectories):
    first = trajectories[0]
    for traj in trajectories[1:]:
        if not np.array_equal(traj.graph.edges, first.graph.edges) or not np.array_equal(traj.graph.node_role, first.graph.node_role):
            raise ContainerFormatError(f'Trajectory {traj.sample_id} does not share the mesh topology of trajectory {first.sample_id}')
        if traj.horizon != first.horizon or traj.dt != first.dt:
            raise ContainerFormatError(f'Trajectory {traj.sample_id} has (T={traj.horizon}, dt={traj.dt}), expected (T={first.horizon}, dt={first.dt})')
        if traj.graph.static_features.shape != first.graph.static_features.shape:
            raise ContainerFormatError(f'Trajectory {traj.sample_id} has a different static feature layout')


def _design_names(trajectories):
    names = trajectories[0].design.names if trajectories[0].design is not None else ()
    for traj in trajectories:
        got = traj.design.names if traj.design is not None else ()
        if got != names:
            raise ContainerFormatError(f'Trajectory {traj.sample_id} has design variables {got}, expected {names}')

    return names


def header_dict(trajectories):
    first = trajectories[0]
    return {
        'format': 'crashsurrogate-trajectories',
        'version': FORMAT_VERSION,
        'dim': first.graph.dim,
        'node_count': first.graph.node_count,
        'edge_count': first.graph.edge_count,
        'T': first.horizon,
        'dt': first.dt,
        'trajectory_count': len(trajectories),
        'static_feature_count': int(first.graph.static_features.shape[1]),
        'design_variables': list(_design_names(trajectories)),
        'sample_ids': [int(t.sample_id) for t in trajectories],
    }


def write_container(path, trajectories, sidecar=True):
    trajectories = list(trajectories)
    if not trajectories:
        raise ContainerFormatError('Refusing to write an empty trajectory container')

    _check_shared(trajectories)
    header = header_dict(trajectories)
    first = trajectories[0]
    g = first.graph
    names = header['design_variables']

    schema = json.dumps({'design_variables': names, 'static_feature_count': header['static_feature_count']}, sort_keys=True).encode('utf-8')

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as fh:
        fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, g.dim, g.node_count, g.edge_count, first.horizon, float(first.dt),
                             len(trajectories), header['static_feature_count'], len(names)))
        fh.write(U4.pack(len(schema)))
        fh.write(schema)
        fh.write(g.edges.astype('<u4').tobytes())
        fh.write(g.node_role.astype('<u1').tobytes())

        for traj in trajectories:
            design = traj.design.values if traj.design is not None else ()
            fh.write(U4.pack(int(traj.sample_id)))
            fh.write(np.asarray(design, dtype='<f8').tobytes())
            fh.write(np.asarray(traj.survival_pair, dtype='<u4').tobytes())
            fh.write(traj.graph.static_features.astype('<f8').tobytes())
            fh.write(traj.states[0].velocities.astype('<f8').tobytes())
            fh.write(traj.positions.astype('<f8').tobytes())

    if sidecar:
        write_json(header, sidecar_path(path))

    log.debug(f'Wrote {len(trajectories)} trajectories to {path}')

    return path


class _Reader:
    def __init__(self, buf, path):
        self.buf = buf
        self.path = path
        self.pos = 0

    def take(self, nbytes, what):
        if self.pos + nbytes > len(self.buf):
            raise ContainerFormatError(f'{self.path}: truncated while reading {what} at byte {self.pos}')
        chunk = self.buf[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return chunk

    def array(self, dtype, shape, what):
        dtype = np.dtype(dtype)
        count = int(np.prod(shape))
        return np.frombuffer(self.take(count * dtype.itemsize, what), dtype=dtype).reshape(shape)


def read_header(path):
    with open(path, 'rb') as fh:
        raw = fh.read(HEADER.size)

    return _unpack_header(raw, path)


def _unpack_header(raw, path):
    if len(raw) < HEADER.size:
        raise ContainerFormatError(f'{path}: file too short for a container header')

    magic, version, dim, n, e, horizon, dt, n_traj, n_static, n_design = HEADER.unpack(raw[:HEADER.size])
    if magic != MAGIC:
        raise ContainerFormatError(f'{path}: bad magic {magic!r}, expected {MAGIC!r}')
    if version != FORMAT_VERSION:
        raise ContainerFormatError(f'{path}: unsupported container version {version}, this build reads {FORMAT_VERSION}')

    return {
        'version': version, 'dim': dim, 'node_count': n, 'edge_count': e, 'T': horizon, 'dt': dt,
        'trajectory_count': n_traj, 'static_feature_count': n_static, 'design_count': n_design,
    }


def read_container(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f'Trajectory container {path.absolute()} does not exist')

    buf = path.read_bytes()
    hdr = _unpack_header(buf, path)
    r = _Reader(buf, path)
    r.pos = HEADER.size

    (schema_len,) = U4.unpack(r.take(U4.size, 'schema length'))
    try:
        schema = json.loads(r.take(schema_len, 'schema').decode('utf-8'))
    except ValueError as e:
        raise ContainerFormatError(f'{path}: schema block is not valid JSON') from e

    names = tuple(schema.get('design_variables', ()))
    if len(names) != hdr['design_count']:
        raise ContainerFormatError(f'{path}: schema lists {len(names)} design variables, header says {hdr["design_count"]}')

    n, dim, n_static = hdr['node_count'], hdr['dim'], hdr['static_feature_count']
    edges = r.array('<u4', (hdr['edge_count'], 2), 'edges').astype(np.int64)
    roles = r.array('<u1', (n,), 'roles').astype(np.int8)

    retval = []
    for k in range(hdr['trajectory_count']):
        (sample_id,) = U4.unpack(r.take(U4.size, f'sample id of trajectory {k}'))
        design = r.array('<f8', (hdr['design_count'],), f'design of sample {sample_id}')
        pair = r.array('<u4', (2,), f'survival pair of sample {sample_id}')
        static = r.array('<f8', (n, n_static), f'static features of sample {sample_id}')
        v0 = r.array('<f8', (n, dim), f'initial velocity of sample {sample_id}')
        positions = r.array('<f8', (hdr['T'] + 1, n, dim), f'positions of sample {sample_id}')

        graph = MeshGraph(edges, roles, static, positions[0])
        retval.append(Trajectory.from_positions(
            graph, positions, v0, hdr['dt'],
            design=DesignSample(int(sample_id), names, tuple(design)) if names else None,
            survival_pair=(int(pair[0]), int(pair[1])),
            sample_id=int(sample_id),
        ))

    if r.pos != len(buf):
        raise ContainerFormatError(f'{path}: {len(buf) - r.pos} trailing bytes after the last trajectory')

    return retval
