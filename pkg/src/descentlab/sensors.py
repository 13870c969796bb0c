"""Sensor models for the integrated guidance-and-navigation variants.

Two observation generators live here.

Mars radar altimetry: a procedural fractal terrain map stands in for a
real digital terrain map.  Four Doppler radar beams are pointed about a
central axis and ranged against the terrain with a deliberately fast,
deliberately imperfect plane-stack model: the ray is intersected with
every 1 m constant-elevation plane, each intersection indexes the map,
and the plane whose height best matches the indexed cell wins.  The
model is cheap but picks the far side of terrain features at low
elevation, and `altimeter_error_stats` quantifies that against an exact
cell-marching ray cast.

Asteroid LIDAR: a watertight icosphere mesh with a smooth radius field
stands in for a small-body shape model.  Five beams (one along the
velocity vector, four offset 12 degrees) are ranged by exact
ray-triangle intersection, and each return carries a Doppler closing
velocity that includes the surface motion from the body's rotation.
"""

import struct

import numpy as np

from .dynamics import LanderState

MARS_MAX_RANGE = 10000.0
ASTEROID_MAX_RANGE = 5000.0

RADAR_OFFSET = np.pi / 8.0
LIDAR_OFFSET = np.deg2rad(12.0)

_TERRAIN_MAGIC = b"DLTM"
_MESH_MAGIC = b"DLMS"
_FORMAT_VERSION = 1


def _unit(v):
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n < 1e-9:
        raise ValueError("cannot normalize a near-zero vector")
    return v / n


def _perp_basis(axis):
    """Deterministic orthonormal pair completing `axis`."""
    helper = np.array([1.0, 0.0, 0.0])
    if abs(axis[0]) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return e1, e2


def _offset_beams(axis, offset, count):
    """`count` unit beams at `offset` radians from axis, equally spaced
    in azimuth."""
    e1, e2 = _perp_basis(axis)
    phis = 2.0 * np.pi * np.arange(count) / count
    beams = (
        np.cos(offset) * axis[None, :]
        + np.sin(offset) * (np.cos(phis)[:, None] * e1 + np.sin(phis)[:, None] * e2)
    )
    return beams / np.linalg.norm(beams, axis=1, keepdims=True)


# --------------------------------------------------------------------------
# Terrain


class TerrainMap:
    """Uniform-grid elevation map in a map frame with the target at
    `target_offset`.  Heights are indexed [ix, iy] with x = ix * spacing."""

    def __init__(self, heights, spacing, target_offset):
        self.heights = np.asarray(heights, dtype=float)
        if not np.all(np.isfinite(self.heights)):
            raise ValueError("terrain heights must be finite")
        self.spacing = float(spacing)
        self.target_offset = np.asarray(target_offset, dtype=float)
        self.nx, self.ny = self.heights.shape
        self.x_max = (self.nx - 1) * self.spacing
        self.y_max = (self.ny - 1) * self.spacing

    def cell_height(self, ix, iy):
        return self.heights[ix, iy]

    def cell_of(self, x, y):
        """Column index pair for a horizontal position; clips the upper
        boundary into the last cell so x = x_max stays indexable."""
        ix = min(int(x // self.spacing), self.nx - 2)
        iy = min(int(y // self.spacing), self.ny - 2)
        return ix, iy

    def inside(self, x, y):
        return 0.0 <= x <= self.x_max and 0.0 <= y <= self.y_max


def _diamond_square(k, rng, roughness=0.58):
    """Classic midpoint-displacement fractal on a (2^k + 1) square grid."""
    n = (1 << k) + 1
    h = np.zeros((n, n))
    h[0, 0], h[0, -1], h[-1, 0], h[-1, -1] = rng.uniform(-1.0, 1.0, 4)
    step = n - 1
    amp = 1.0
    while step > 1:
        half = step // 2
        # Diamond: centers of each square get the corner average.
        cx = np.arange(half, n - 1, step)
        xs, ys = np.meshgrid(cx, cx, indexing="ij")
        corners = (
            h[xs - half, ys - half]
            + h[xs - half, ys + half]
            + h[xs + half, ys - half]
            + h[xs + half, ys + half]
        )
        h[xs, ys] = corners / 4.0 + rng.uniform(-amp, amp, xs.shape)
        # Square: edge midpoints get the average of present neighbours.
        for parity in (0, 1):
            rows = np.arange(half * parity, n, step)
            cols = np.arange(half * (1 - parity), n, step)
            if rows.size == 0 or cols.size == 0:
                continue
            xs, ys = np.meshgrid(rows, cols, indexing="ij")
            total = np.zeros(xs.shape)
            cnt = np.zeros(xs.shape)
            for dx, dy in ((-half, 0), (half, 0), (0, -half), (0, half)):
                nx_, ny_ = xs + dx, ys + dy
                ok = (nx_ >= 0) & (nx_ < n) & (ny_ >= 0) & (ny_ < n)
                total[ok] += h[nx_[ok], ny_[ok]]
                cnt[ok] += 1
            h[xs, ys] = total / cnt + rng.uniform(-amp, amp, xs.shape)
        step = half
        amp *= roughness
    return h


def generate_dtm(seed, size=1025, spacing=10.0):
    """Procedural terrain with the statistics the experiments need.

    A diamond-square surface is rescaled so the far field (beyond 600 m
    from the target column) spans exactly [0, 380] m, a cosine blend
    pins the target column to exactly 350 m, and the result is mirrored
    about its +x edge so the final map is seam-symmetric.  The map-frame
    landing target sits at [4000, 4000, 400]: 50 m above the 350 m hill.
    """
    k = int(np.log2(size - 1))
    if (1 << k) + 1 != size:
        raise ValueError("size must be 2^k + 1")
    rng = np.random.default_rng(seed)
    base = _diamond_square(k, rng)

    target_xy = np.array([4000.0, 4000.0])
    xs = np.arange(size) * spacing
    dist = np.hypot(xs[:, None] - target_xy[0], xs[None, :] - target_xy[1])
    far = dist >= 600.0
    lo, hi = base[far].min(), base[far].max()
    h = (base - lo) / (hi - lo) * 380.0

    blend = dist < 500.0
    w = 0.5 * (1.0 + np.cos(np.pi * dist[blend] / 500.0))
    h[blend] = w * 350.0 + (1.0 - w) * h[blend]
    h = np.clip(h, 0.0, 380.0)

    # Mirror about the +x edge; the seam row is shared, not duplicated.
    doubled = np.concatenate([h, h[-2::-1, :]], axis=0)
    return TerrainMap(doubled, spacing, np.array([4000.0, 4000.0, 400.0]))


def save_terrain(path, dtm):
    arrays = {
        "heights": dtm.heights,
        "spacing": np.array([dtm.spacing]),
        "target_offset": dtm.target_offset,
    }
    _write_arrays(path, _TERRAIN_MAGIC, arrays)


def load_terrain(path):
    arrays = _read_arrays(path, _TERRAIN_MAGIC)
    return TerrainMap(
        arrays["heights"], arrays["spacing"][0], arrays["target_offset"]
    )


# --------------------------------------------------------------------------
# Plane-stack altimeter and the exact oracle


def plane_stack_range(pos, direction, dtm):
    """Fast altimeter return: (range m, hit flag).

    Intersect the descending ray with every 1 m elevation plane, index
    the map at each crossing, and keep the crossing whose plane height
    is closest to the indexed cell height.  This reproduces the fast
    model's characteristic far-side errors on purpose.
    """
    pos = np.asarray(pos, dtype=float)
    d = _unit(direction)
    if d[2] >= -1e-12:
        return MARS_MAX_RANGE, False
    planes = np.arange(0.0, 381.0)
    t = (planes - pos[2]) / d[2]
    x = pos[0] + t * d[0]
    y = pos[1] + t * d[1]
    ok = (t > 0.0) & (x >= 0.0) & (x <= dtm.x_max) & (y >= 0.0) & (y <= dtm.y_max)
    if not np.any(ok):
        return MARS_MAX_RANGE, False
    ix = np.minimum((x[ok] // dtm.spacing).astype(int), dtm.nx - 2)
    iy = np.minimum((y[ok] // dtm.spacing).astype(int), dtm.ny - 2)
    score = np.abs(planes[ok] - dtm.heights[ix, iy])
    return float(t[ok][np.argmin(score)]), True


def ray_march_range(pos, direction, dtm):
    """Exact altimeter return against the piecewise-constant terrain.

    Marches the ray cell by cell.  Within a cell the beam hits either
    the flat column top (where the ray height crosses the cell height)
    or the column side wall (entering a cell already below its height).
    """
    pos = np.asarray(pos, dtype=float)
    d = _unit(direction)

    t = 0.0
    # Clip to the map box horizontally first.
    for axis, bound in ((0, dtm.x_max), (1, dtm.y_max)):
        if d[axis] != 0.0:
            t_lo = (0.0 - pos[axis]) / d[axis]
            t_hi = (bound - pos[axis]) / d[axis]
            t = max(t, min(t_lo, t_hi))
        elif not 0.0 <= pos[axis] <= bound:
            return MARS_MAX_RANGE, False
    t = max(t, 0.0)
    p = pos + t * d
    if not dtm.inside(p[0], p[1]):
        return MARS_MAX_RANGE, False

    ix, iy = dtm.cell_of(p[0], p[1])
    step_x = 1 if d[0] > 0 else -1
    step_y = 1 if d[1] > 0 else -1
    inf = np.inf
    t_max_x = inf if d[0] == 0.0 else ((ix + (step_x > 0)) * dtm.spacing - pos[0]) / d[0]
    t_max_y = inf if d[1] == 0.0 else ((iy + (step_y > 0)) * dtm.spacing - pos[1]) / d[1]
    t_dx = inf if d[0] == 0.0 else abs(dtm.spacing / d[0])
    t_dy = inf if d[1] == 0.0 else abs(dtm.spacing / d[1])

    while True:
        t_exit = min(t_max_x, t_max_y)
        h = dtm.heights[ix, iy]
        z_in = pos[2] + t * d[2]
        if z_in <= h:
            return max(t, 0.0), True  # wall (or immediate) hit
        if d[2] < 0.0:
            t_hit = (h - pos[2]) / d[2]
            if t < t_hit <= t_exit:
                return t_hit, True
        if t_exit is inf or t_exit == inf:
            return MARS_MAX_RANGE, False
        t = t_exit
        if t_max_x <= t_max_y:
            ix += step_x
            t_max_x += t_dx
        else:
            iy += step_y
            t_max_y += t_dy
        if not (0 <= ix <= dtm.nx - 2 and 0 <= iy <= dtm.ny - 2):
            return MARS_MAX_RANGE, False


def altimeter_error_stats(dtm, elevations, n, rng):
    """Characterize the plane-stack model against the exact ray march.

    For each elevation: sample n terrain points uniformly over the map,
    pair each with a lander at a uniform horizontal position at that
    elevation, aim the beam at the terrain point, and compare the two
    range models.  Returns one row per elevation with mean/std/max
    absolute error (m) and the percentage of plane-stack misses.
    """
    if n < 1000:
        raise ValueError("need at least 1000 samples per elevation")
    rows = []
    for elev in elevations:
        errors = []
        misses = 0
        for _ in range(n):
            gx = rng.uniform(0.0, dtm.x_max)
            gy = rng.uniform(0.0, dtm.y_max)
            ix, iy = dtm.cell_of(gx, gy)
            ground = np.array([gx, gy, dtm.heights[ix, iy]])
            lander = np.array(
                [rng.uniform(0.0, dtm.x_max), rng.uniform(0.0, dtm.y_max), elev]
            )
            d = ground - lander
            if d[2] >= 0.0 or np.linalg.norm(d) < 1e-9:
                continue  # terrain point above the lander: not a beam geometry
            d = d / np.linalg.norm(d)
            exact, exact_hit = ray_march_range(lander, d, dtm)
            fast, fast_hit = plane_stack_range(lander, d, dtm)
            if not fast_hit or not exact_hit:
                misses += 1
                continue
            errors.append(abs(fast - exact))
        errors = np.asarray(errors)
        rows.append(
            {
                "elevation": float(elev),
                "mean": float(errors.mean()) if errors.size else 0.0,
                "std": float(errors.std()) if errors.size else 0.0,
                "max": float(errors.max()) if errors.size else 0.0,
                "miss_pct": 100.0 * misses / n,
            }
        )
    return rows


# --------------------------------------------------------------------------
# Radar beams


def radar_beam_dirs(v, mode, to_target=None):
    """Four radar beam directions at pi/8 about the central axis.

    velocity_averaged_down: axis midway between the unit velocity and
    straight down.  target_pointing: axis along the lander-to-target
    line (`to_target`).  Degenerate axes fall back to straight down.
    """
    down = np.array([0.0, 0.0, -1.0])
    if mode == "target_pointing":
        axis = np.asarray(to_target, dtype=float)
    else:
        v = np.asarray(v, dtype=float)
        speed = float(np.linalg.norm(v))
        axis = down if speed < 1e-9 else v / speed + down
    norm = float(np.linalg.norm(axis))
    axis = down if norm < 1e-9 else axis / norm
    return _offset_beams(axis, RADAR_OFFSET, 4)


def radar_observe(state: LanderState, dtm, mode, layout="ranges_doppler"):
    """Simulated Doppler radar altimeter observation.

    The lander state is in the target frame; the terrain query happens
    in the map frame (target at dtm.target_offset).  Layout `ranges` is
    the 4 beam ranges; `ranges_doppler` appends 4 closing velocities
    (positive when approaching the *surface* along the beam).  A missed
    beam returns the max-range sentinel and zero closing velocity.
    """
    pos_map = state.r + dtm.target_offset
    beams = radar_beam_dirs(state.v, mode, to_target=-state.r if mode == "target_pointing" else None)
    ranges = np.empty(4)
    closing = np.zeros(4)
    for i, b in enumerate(beams):
        rng_i, hit = plane_stack_range(pos_map, b, dtm)
        ranges[i] = rng_i if hit else MARS_MAX_RANGE
        if hit:
            closing[i] = float(np.dot(state.v, b))
    if layout == "ranges":
        return ranges
    if layout == "ranges_doppler":
        return np.concatenate([ranges, closing])
    raise ValueError(f"unknown radar layout {layout!r}")


# --------------------------------------------------------------------------
# Asteroid mesh


class AsteroidMesh:
    """Closed triangle mesh with precomputed intersection helpers."""

    def __init__(self, vertices, faces):
        self.vertices = np.asarray(vertices, dtype=float)
        self.faces = np.asarray(faces, dtype=np.int64)
        tri = self.vertices[self.faces]
        self._v0 = tri[:, 0]
        self._e1 = tri[:, 1] - tri[:, 0]
        self._e2 = tri[:, 2] - tri[:, 0]
        self._centroid = tri.mean(axis=1)
        # Any point of a triangle lies within its circumradius of the
        # centroid, so pruning by ray-line distance with this threshold
        # can never drop a triangle the ray actually hits.
        self._prune_radius = float(
            np.sqrt(((tri - self._centroid[:, None, :]) ** 2).sum(axis=2).max())
        ) + 1e-6

    @property
    def radii(self):
        return np.linalg.norm(self.vertices, axis=1)


def _icosahedron():
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=float,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return v, f


def _subdivide(vertices, faces):
    """One midpoint subdivision pass, vertices re-projected to the unit
    sphere; the shared midpoint cache keeps the result watertight."""
    verts = list(vertices)
    cache = {}

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            m = verts[a] + verts[b]
            verts.append(m / np.linalg.norm(m))
            cache[key] = len(verts) - 1
        return cache[key]

    out = np.empty((len(faces) * 4, 3), dtype=np.int64)
    for i, (a, b, c) in enumerate(faces):
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out[4 * i : 4 * i + 4] = [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.asarray(verts), out


def generate_asteroid_mesh(seed, subdivisions=6, mean_radius=250.0, bump=0.15):
    """Star-shaped small-body mesh at roughly 5 m facet resolution.

    An icosphere is subdivided until the edge length drops under 5 m at
    the 250 m mean radius, then each vertex radius is modulated by a
    smooth low-order direction field scaled to +/-15 percent.
    """
    verts, faces = _icosahedron()
    for _ in range(subdivisions):
        verts, faces = _subdivide(verts, faces)
    rng = np.random.default_rng(seed)
    field = np.zeros(len(verts))
    axes = rng.normal(size=(6, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    for ax, power in zip(axes, (2, 2, 3, 3, 4, 4)):
        field += rng.uniform(-1.0, 1.0) * np.dot(verts, ax) ** power
    field /= np.abs(field).max()
    radii = mean_radius * (1.0 + bump * field)
    return AsteroidMesh(verts * radii[:, None], faces)


def save_mesh(path, mesh):
    _write_arrays(
        path, _MESH_MAGIC, {"vertices": mesh.vertices, "faces": mesh.faces.astype(float)}
    )


def load_mesh(path):
    arrays = _read_arrays(path, _MESH_MAGIC)
    return AsteroidMesh(arrays["vertices"], arrays["faces"].astype(np.int64))


def ray_mesh_range(origin, direction, mesh):
    """First ray-mesh intersection: (range m, hit flag, hit point).

    Triangles are pruned by perpendicular distance between the ray line
    and their centroids (complete by the circumradius argument), then
    the survivors get the exact Moller-Trumbore treatment.
    """
    o = np.asarray(origin, dtype=float)
    d = _unit(direction)
    rel = mesh._centroid - o
    along = rel @ d
    perp2 = (rel * rel).sum(axis=1) - along**2
    cand = (perp2 <= mesh._prune_radius**2) & (along > -mesh._prune_radius)
    if not np.any(cand):
        return ASTEROID_MAX_RANGE, False, None

    v0, e1, e2 = mesh._v0[cand], mesh._e1[cand], mesh._e2[cand]
    pvec = np.cross(d, e2)
    det = (e1 * pvec).sum(axis=1)
    ok = np.abs(det) > 1e-12
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = o - v0
    u = (tvec * pvec).sum(axis=1) * inv
    qvec = np.cross(tvec, e1)
    v = (qvec * d[None, :]).sum(axis=1) * inv
    t = (e2 * qvec).sum(axis=1) * inv
    eps = 1e-9
    hit = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1.0 + eps) & (t > eps)
    if not np.any(hit):
        return ASTEROID_MAX_RANGE, False, None
    t_min = float(t[hit].min())
    return t_min, True, o + t_min * d


# --------------------------------------------------------------------------
# LIDAR


def lidar_beam_dirs(v, prev=None):
    """Central beam along the velocity vector plus four at 12 degrees.

    A stationary lander has no velocity direction; the previous beam set
    is held in that case (straight down before any valid set exists).
    """
    v = np.asarray(v, dtype=float)
    speed = float(np.linalg.norm(v))
    if speed < 1e-9:
        if prev is not None:
            return prev
        axis = np.array([0.0, 0.0, -1.0])
    else:
        axis = v / speed
    return np.vstack([axis, _offset_beams(axis, LIDAR_OFFSET, 4)])


def lidar_observe(state: LanderState, mesh, forces, prev_dirs=None):
    """Five ranges plus five Doppler closing velocities (length 10).

    Rays are cast in the asteroid-centered frame (lander position offset
    by forces.r_offset).  The closing velocity per beam is the component
    of the lander velocity relative to the struck surface patch along
    the beam, the patch moving at omega x r_surface.  Missed beams give
    the max-range sentinel and zero closing velocity.
    """
    beams = lidar_beam_dirs(state.v, prev=prev_dirs)
    origin = state.r + forces.r_offset
    ranges = np.empty(5)
    closing = np.zeros(5)
    for i, b in enumerate(beams):
        t, hit, point = ray_mesh_range(origin, b, mesh)
        ranges[i] = t if hit else ASTEROID_MAX_RANGE
        if hit:
            surf_v = np.cross(forces.omega, point)
            closing[i] = float(np.dot(state.v - surf_v, b))
    return np.concatenate([ranges, closing]), beams


class SensorSuite:
    """Owns the terrain or mesh for one experiment and the per-episode
    beam-direction memory."""

    _terrain_cache = {}
    _mesh_cache = {}

    def __init__(self, body, obs_cfg):
        self.body = body
        self.cfg = obs_cfg
        self.dtm = None
        self.mesh = None
        if obs_cfg.kind == "radar":
            key = obs_cfg.dtm_seed
            if key not in self._terrain_cache:
                self._terrain_cache[key] = generate_dtm(key)
            self.dtm = self._terrain_cache[key]
        elif obs_cfg.kind == "lidar":
            key = obs_cfg.mesh_seed
            if key not in self._mesh_cache:
                self._mesh_cache[key] = generate_asteroid_mesh(key)
            self.mesh = self._mesh_cache[key]
        self._lidar_dirs = None

    def start_episode(self):
        self._lidar_dirs = None

    def radar(self, state, mode, layout):
        return radar_observe(state, self.dtm, mode, layout)

    def lidar(self, state, forces):
        obs, dirs = lidar_observe(state, self.mesh, forces, prev_dirs=self._lidar_dirs)
        self._lidar_dirs = dirs
        return obs


# --------------------------------------------------------------------------
# Versioned binary container (shared by terrain and mesh files)


def _write_arrays(path, magic, arrays):
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", _FORMAT_VERSION))
        fh.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype=np.float64)
            encoded = name.encode()
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def _read_arrays(path, magic):
    with open(path, "rb") as fh:
        if fh.read(4) != magic:
            raise ValueError(f"{path}: bad magic for {magic!r} container")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        (count,) = struct.unpack("<I", fh.read(4))
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode()
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            data = np.frombuffer(fh.read(8 * int(np.prod(shape))), dtype=np.float64)
            arrays[name] = data.reshape(shape).copy()
        return arrays
