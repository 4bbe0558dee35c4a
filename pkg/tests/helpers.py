"""Shared test utilities: meshes, finite-difference oracles, rotations."""
import numpy as np


def single_tet_dict():
    return {
        "vertices": [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]],
        "tets": [[0, 1, 2, 3]],
        "element_sets": {"all": [0]},
    }


def unit_cube_hex_dict():
    return {
        "vertices": [
            [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
            [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
        ],
        "hexes": [[0, 1, 2, 3, 4, 5, 6, 7]],
        "element_sets": {"all": [0]},
    }


def random_tet_vertices(rng, min_det=0.1):
    """Vertices of a random, well-conditioned, positively oriented tet."""
    while True:
        pts = rng.uniform(-1.0, 1.0, (4, 3))
        det = np.linalg.det((pts[1:] - pts[0]).T)
        if det > min_det:
            return pts


def fd_gradient(value_fn, x, h=1e-6):
    """Central finite differences of a scalar function (the test oracle)."""
    x = np.asarray(x, dtype=float)
    g = np.zeros(x.size)
    flat = x.reshape(-1)
    for i in range(flat.size):
        xp, xm = flat.copy(), flat.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (value_fn(xp.reshape(x.shape)) - value_fn(xm.reshape(x.shape))) / (2 * h)
    return g


def fd_jacobian(vec_fn, x, h=1e-6):
    """Central finite differences of a vector function, columns = d/dx_i."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(vec_fn(x))
    J = np.zeros((f0.size, x.size))
    flat = x.reshape(-1)
    for i in range(flat.size):
        xp, xm = flat.copy(), flat.copy()
        xp[i] += h
        xm[i] -= h
        J[:, i] = (np.asarray(vec_fn(xp.reshape(x.shape))).reshape(-1)
                   - np.asarray(vec_fn(xm.reshape(x.shape))).reshape(-1)) / (2 * h)
    return J


def rel_err(a, b):
    scale = max(np.abs(b).max(), 1e-12)
    return np.abs(np.asarray(a) - np.asarray(b)).max() / scale


def random_rotation(rng):
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
