"""
Explicit-dynamics ground truth: a 2D mass-spring lattice driven into a fixed rigid circular pole.

The lattice (structural and shear springs with dashpots) moves toward the pole at the impact
speed; a penalty force pushes nodes out of the pole and a projection step keeps every node
outside the penetration tolerance. The pole is a ring of RIGID nodes so the surrogate sees it in
the mesh graph. Integration is semi-implicit Euler, sub-stepped below the output interval.
"""
import logging

import numpy as np

from dataclasses import dataclass
from typing import Optional

from crashsurrogate.helpers.cache import cached_results, content_key
from crashsurrogate.helpers.errors import ConfigError, StabilityError
from crashsurrogate.mesh.graph import MeshGraph, NodeRole, Trajectory, make_static_features, undirected_to_edges

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleConfig:
    nx: int = 36
    ny: int = 6
    spacing: float = 10.0
    stiffness_per_thickness: float = 20.0
    shear_factor: float = 0.5
    damping: float = 0.5
    drag: float = 0.0
    node_mass: float = 1.0
    back_mass_factor: float = 10.0
    pole_radius: float = 20.0
    pole_nodes: int = 16
    pole_gap: float = 5.0
    penalty_stiffness: float = 400.0
    penetration_tolerance: float = 0.02
    inner_dt: float = 0.02
    output_dt: float = 5.0
    T: int = 15

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ConfigError(f'Lattice needs at least 3 x 3 nodes, got {self.nx} x {self.ny}')
        if min(self.spacing, self.stiffness_per_thickness, self.node_mass, self.pole_radius, self.inner_dt, self.output_dt) <= 0:
            raise ConfigError('Lattice spacing, stiffness, mass, pole radius and time steps should be positive')
        if self.damping < 0 or self.drag < 0:
            raise ConfigError('Damping and drag should be non-negative')
        if self.pole_nodes < 3:
            raise ConfigError(f'The pole ring needs at least 3 nodes, got {self.pole_nodes}')
        if self.T < 1:
            raise ConfigError(f'Horizon T should be >= 1, got {self.T}')

        ratio = self.output_dt / self.inner_dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ConfigError(f'output_dt {self.output_dt} is not a whole multiple of inner_dt {self.inner_dt}')

    @property
    def substeps(self):
        return int(round(self.output_dt / self.inner_dt))

    @property
    def lattice_nodes(self):
        return self.nx * self.ny

    def survival_pair(self):
        """Centre-column nodes of the second and the second-to-last row"""
        cx = self.nx // 2
        return (1 * self.nx + cx, (self.ny - 2) * self.nx + cx)


@dataclass(frozen=True, eq=False)
class SpringSystem:
    """
    Point masses joined by linear springs with dashpots. Fixed nodes have infinite mass. An optional
    circular obstacle acts on every free node through a penalty force and a projection safeguard.
    """
    rest_positions: np.ndarray
    masses: np.ndarray
    springs: np.ndarray
    rest_lengths: np.ndarray
    stiffness: np.ndarray
    fixed: np.ndarray
    damping: float = 0.0
    drag: float = 0.0
    obstacle_centre: Optional[np.ndarray] = None
    obstacle_radius: float = 0.0
    penalty_stiffness: float = 0.0
    penetration_tolerance: float = 0.02

    @property
    def inv_mass(self):
        return np.where(self.fixed, 0.0, 1.0 / self.masses)

    def max_frequency(self):
        inv_m = self.inv_mass
        omega = 0.0
        if self.springs.size:
            omega = float(np.sqrt(self.stiffness * (inv_m[self.springs[:, 0]] + inv_m[self.springs[:, 1]])).max())
        if self.obstacle_centre is not None and self.penalty_stiffness > 0:
            omega = max(omega, float(np.sqrt(self.penalty_stiffness * inv_m.max())))

        return omega

    def check_stability(self, inner_dt):
        omega = self.max_frequency()
        if omega > 0 and inner_dt > 2.0 / omega:
            raise StabilityError(f'inner_dt {inner_dt} exceeds the explicit stability bound 2/omega_max = {2.0 / omega:.6g}')

        return omega

    def forces(self, x, v):
        f = np.zeros_like(x)
        free = ~self.fixed

        if self.springs.size:
            a, b = self.springs[:, 0], self.springs[:, 1]
            d = x[b] - x[a]
            length = np.sqrt((d ** 2).sum(axis=1))
            n = d / np.where(length > 0, length, 1.0)[:, None]
            rel_v = ((v[b] - v[a]) * n).sum(axis=1)
            mag = self.stiffness * (length - self.rest_lengths) + self.damping * rel_v
            fs = mag[:, None] * n
            np.add.at(f, a, fs)
            np.add.at(f, b, -fs)

        if self.drag:
            f -= self.drag * self.masses[:, None] * v

        if self.obstacle_centre is not None and self.penalty_stiffness > 0:
            d = x - self.obstacle_centre
            dist = np.sqrt((d ** 2).sum(axis=1))
            inside = free & (dist < self.obstacle_radius)
            if inside.any():
                n = d[inside] / np.where(dist[inside] > 0, dist[inside], 1.0)[:, None]
                f[inside] += (self.penalty_stiffness * (self.obstacle_radius - dist[inside]))[:, None] * n

        f[self.fixed] = 0.0
        return f

    def project(self, x, v):
        """Move free nodes that ended deeper than the tolerance back to half the tolerance and drop their inward velocity"""
        if self.obstacle_centre is None:
            return x, v

        limit = self.obstacle_radius * (1.0 - self.penetration_tolerance)
        d = x - self.obstacle_centre
        dist = np.sqrt((d ** 2).sum(axis=1))
        deep = ~self.fixed & (dist < limit)
        if not deep.any():
            return x, v

        n = d[deep] / np.where(dist[deep] > 0, dist[deep], 1.0)[:, None]
        x = x.copy()
        v = v.copy()
        x[deep] = self.obstacle_centre + n * self.obstacle_radius * (1.0 - 0.5 * self.penetration_tolerance)
        vn = (v[deep] * n).sum(axis=1)
        v[deep] -= np.minimum(vn, 0.0)[:, None] * n

        return x, v

    def energy(self, x, v):
        """Kinetic + elastic + penalty energy"""
        kinetic = 0.5 * float((self.masses[~self.fixed, None] * v[~self.fixed] ** 2).sum())

        elastic = 0.0
        if self.springs.size:
            d = x[self.springs[:, 1]] - x[self.springs[:, 0]]
            stretch = np.sqrt((d ** 2).sum(axis=1)) - self.rest_lengths
            elastic = 0.5 * float((self.stiffness * stretch ** 2).sum())

        penalty = 0.0
        if self.obstacle_centre is not None and self.penalty_stiffness > 0:
            dist = np.sqrt(((x - self.obstacle_centre) ** 2).sum(axis=1))
            depth = np.where(~self.fixed & (dist < self.obstacle_radius), self.obstacle_radius - dist, 0.0)
            penalty = 0.5 * self.penalty_stiffness * float((depth ** 2).sum())

        return kinetic + elastic + penalty

    def integrate(self, x, v, inner_dt, n_steps, record_every=1):
        """
        Semi-implicit Euler: v += dt f/m, then x += dt v. Returns the recorded (positions,
        velocities) every `record_every` inner steps, the initial state included.
        """
        self.check_stability(inner_dt)
        inv_m = self.inv_mass[:, None]
        free = ~self.fixed[:, None]

        x = np.array(x, dtype=np.float64)
        v = np.where(free, np.array(v, dtype=np.float64), 0.0)
        xs, vs = [x.copy()], [v.copy()]
        for step in range(1, n_steps + 1):
            v = v + inner_dt * self.forces(x, v) * inv_m
            x = np.where(free, x + inner_dt * v, x)
            x, v = self.project(x, v)
            if step % record_every == 0:
                xs.append(x.copy())
                vs.append(v.copy())

        return np.stack(xs), np.stack(vs)


def lattice_geometry(design, cfg):
    """Undeformed lattice coordinates after the geometry morphs of `design`"""
    nx, ny, s = cfg.nx, cfg.ny, cfg.spacing
    half_width = 0.5 * (nx - 1) * s

    col = np.arange(nx)
    row = np.arange(ny)
    x = np.tile(col * s - half_width, ny)
    r = np.repeat(row, nx).astype(np.float64)
    y = r * s

    depth_share = r / (ny - 1)
    front_share = np.maximum(0.0, 1.0 - r / 2.0)
    skin_share = 1.0 - depth_share
    xn = x / half_width

    y = y + design.get('section_depth', 0.0) * depth_share
    y = y - design.get('front_depth', 0.0) * front_share
    y = y - design.get('curvature', 0.0) * (1.0 - xn ** 2) * skin_share
    x = x * (1.0 + design.get('front_width', 0.0) / half_width * skin_share)

    return np.stack([x, y], axis=1)


def lattice_springs(cfg):
    """Structural (row, column) and shear (both diagonals) springs as undirected pairs plus a shear flag"""
    nx, ny = cfg.nx, cfg.ny
    idx = np.arange(nx * ny).reshape(ny, nx)

    structural = [
        np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1),
        np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1),
    ]
    shear = [
        np.stack([idx[:-1, :-1].ravel(), idx[1:, 1:].ravel()], axis=1),
        np.stack([idx[:-1, 1:].ravel(), idx[1:, :-1].ravel()], axis=1),
    ]

    pairs = np.concatenate(structural + shear)
    is_shear = np.concatenate([np.zeros(sum(len(p) for p in structural), dtype=bool), np.ones(sum(len(p) for p in shear), dtype=bool)])

    return pairs, is_shear


def node_thickness(design, cfg):
    """Outer skins (front and back rows) take thickness_outer, the core rows thickness_inner"""
    r = np.repeat(np.arange(cfg.ny), cfg.nx)
    outer = (r == 0) | (r == cfg.ny - 1)

    return np.where(outer, design.get('thickness_outer', 1.5), design.get('thickness_inner', 1.2))


def pole_centre(lattice_positions, design, cfg):
    return np.array([design.get('pole_position', 0.0), lattice_positions[:, 1].min() - cfg.pole_radius - cfg.pole_gap])


def build_scene(design, cfg):
    """
    (MeshGraph, SpringSystem over the lattice nodes, initial positions of all nodes). Lattice nodes
    come first in row-major order, the pole ring follows.
    """
    lattice = lattice_geometry(design, cfg)
    centre = pole_centre(lattice, design, cfg)

    angles = 2.0 * np.pi * np.arange(cfg.pole_nodes) / cfg.pole_nodes
    ring = centre + cfg.pole_radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    positions = np.concatenate([lattice, ring])

    n_lat = cfg.lattice_nodes
    ring_idx = n_lat + np.arange(cfg.pole_nodes)
    ring_pairs = np.stack([ring_idx, np.roll(ring_idx, -1)], axis=1)

    pairs, is_shear = lattice_springs(cfg)
    thickness = np.concatenate([node_thickness(design, cfg), np.zeros(cfg.pole_nodes)])
    roles = np.concatenate([np.full(n_lat, NodeRole.FREE), np.full(cfg.pole_nodes, NodeRole.RIGID)])

    graph = MeshGraph(
        edges=undirected_to_edges(np.concatenate([pairs, ring_pairs])),
        node_role=roles,
        static_features=make_static_features(roles, thickness),
        reference_positions=positions,
    )

    masses = np.full(n_lat, cfg.node_mass)
    masses[(cfg.ny - 1) * cfg.nx:] *= cfg.back_mass_factor

    d = lattice[pairs[:, 1]] - lattice[pairs[:, 0]]
    stiffness = cfg.stiffness_per_thickness * 0.5 * (thickness[pairs[:, 0]] + thickness[pairs[:, 1]])
    stiffness = np.where(is_shear, cfg.shear_factor * stiffness, stiffness)

    system = SpringSystem(
        rest_positions=lattice,
        masses=masses,
        springs=pairs,
        rest_lengths=np.sqrt((d ** 2).sum(axis=1)),
        stiffness=stiffness,
        fixed=np.zeros(n_lat, dtype=bool),
        damping=cfg.damping,
        drag=cfg.drag,
        obstacle_centre=centre,
        obstacle_radius=cfg.pole_radius,
        penalty_stiffness=cfg.penalty_stiffness,
        penetration_tolerance=cfg.penetration_tolerance,
    )

    return graph, system, positions


def _simulation_key(design, cfg, bounds=None):
    return content_key(design.names, design.values, design.sample_id, cfg)


@cached_results(_simulation_key, cache_level='simulation')
def simulate(design, cfg, bounds=None):
    """Ground-truth trajectory of the lattice for one design, T + 1 frames every output_dt"""
    if bounds is not None:
        design.check_bounds(bounds)

    graph, system, positions = build_scene(design, cfg)
    system.check_stability(cfg.inner_dt)

    n_lat = cfg.lattice_nodes
    v0 = np.zeros_like(positions)
    v0[:n_lat, 1] = -design.get('impact_speed', 0.0)

    xs, _ = system.integrate(positions[:n_lat], v0[:n_lat], cfg.inner_dt, cfg.T * cfg.substeps, record_every=cfg.substeps)

    frames = np.repeat(positions[None], cfg.T + 1, axis=0)
    frames[:, :n_lat] = xs

    log.debug(f'Simulated sample {design.sample_id}: max displacement {np.abs(frames - frames[0]).max():.3g} mm')

    return Trajectory.from_positions(
        graph, frames, v0, cfg.output_dt,
        design=design,
        survival_pair=cfg.survival_pair(),
        sample_id=design.sample_id,
        metadata={'oracle': 'lattice'},
    )
