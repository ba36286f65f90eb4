"""Compiled tile-compositing kernel (numba), optional fast path.

Semantics match the vectorized numpy kernel exactly: same alpha skip and
clamp rules, same front-to-back order, same termination check against
the transmittance before each splat. Tiles are independent and written
to disjoint buffer regions, so results do not depend on the thread
count. Accumulation order within a pixel is sequential, so values can
differ from the numpy path only by floating-point summation order.
"""

from __future__ import annotations

import math

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

ALPHA_MAX = 0.99
ALPHA_SKIP = 1.0 / 255.0
LOG_SKIP = math.log(ALPHA_SKIP)  # alpha < skip whenever power < this, since opacity <= 1


if HAVE_NUMBA:

    @njit(parallel=True, cache=True, fastmath=False)
    def composite_tiles(
        group_starts,
        group_ends,
        group_tiles,
        owner_sorted,
        centers,
        conics,
        opacities,
        colors,
        z_depth,
        normals,
        sky_flags,
        tiles_x,
        tile,
        width,
        height,
        bg,
        bg_depth,
        termination,
        rgb,
        depth,
        normal,
        alpha_acc,
        sky_weight,
    ):
        for gi in prange(group_tiles.shape[0]):
            t = group_tiles[gi]
            ty = t // tiles_x
            tx = t % tiles_x
            x0 = tx * tile
            x1 = min(x0 + tile, width)
            y0 = ty * tile
            y1 = min(y0 + tile, height)
            for py in range(y0, y1):
                for px in range(x0, x1):
                    trans = 1.0
                    r = 0.0
                    g = 0.0
                    b = 0.0
                    d = 0.0
                    nx = 0.0
                    ny = 0.0
                    nz = 0.0
                    sw = 0.0
                    for k in range(group_starts[gi], group_ends[gi]):
                        if termination > 0.0 and trans < termination:
                            break
                        s = owner_sorted[k]
                        dx = px - centers[s, 0]
                        dy = py - centers[s, 1]
                        power = -0.5 * (
                            conics[s, 0] * dx * dx
                            + 2.0 * conics[s, 1] * dx * dy
                            + conics[s, 2] * dy * dy
                        )
                        if power < LOG_SKIP:
                            continue
                        a = opacities[s] * math.exp(power)
                        if a < ALPHA_SKIP:
                            continue
                        if a > ALPHA_MAX:
                            a = ALPHA_MAX
                        w = a * trans
                        r += w * colors[s, 0]
                        g += w * colors[s, 1]
                        b += w * colors[s, 2]
                        d += w * z_depth[s]
                        nx += w * normals[s, 0]
                        ny += w * normals[s, 1]
                        nz += w * normals[s, 2]
                        sw += w * sky_flags[s]
                        trans *= 1.0 - a
                    rgb[py, px, 0] = r + trans * bg[0]
                    rgb[py, px, 1] = g + trans * bg[1]
                    rgb[py, px, 2] = b + trans * bg[2]
                    depth[py, px] = d + trans * bg_depth
                    normal[py, px, 0] = nx
                    normal[py, px, 1] = ny
                    normal[py, px, 2] = nz
                    alpha_acc[py, px] = 1.0 - trans
                    sky_weight[py, px] = sw

    def set_threads(threads: int) -> None:
        limit = numba.config.NUMBA_NUM_THREADS
        numba.set_num_threads(max(1, min(threads, limit)))

else:  # pragma: no cover

    composite_tiles = None

    def set_threads(threads: int) -> None:
        raise RuntimeError("numba is not available")
