"""Regenerate the bundled 128x128 content and style images.

    python tools/make_assets.py

Output is deterministic; the PPM files under src/swag/assets are committed so
recipes never depend on this script's numpy version.
"""

from pathlib import Path

import numpy as np

from swag.imageio import ImageBuffer, save

SIZE = 128
ROOT = Path(__file__).resolve().parents[1] / "src" / "swag" / "assets"


def grid():
    v, u = np.mgrid[0:SIZE, 0:SIZE] / (SIZE - 1)
    return u, v


def value_noise(rng, cells, octaves=4):
    out = np.zeros((SIZE, SIZE))
    amp, total = 1.0, 0.0
    for o in range(octaves):
        n = cells * 2 ** o
        lattice = rng.random((n + 1, n + 1))
        pos = np.linspace(0, n, SIZE, endpoint=False)
        i = pos.astype(int)
        f = pos - i
        f = f * f * (3 - 2 * f)
        a = lattice[i][:, i] * (1 - f)[None, :] + lattice[i][:, i + 1] * f[None, :]
        b = lattice[i + 1][:, i] * (1 - f)[None, :] + lattice[i + 1][:, i + 1] * f[None, :]
        out += amp * (a * (1 - f)[:, None] + b * f[:, None])
        total += amp
        amp *= 0.5
    return out / total


def lerp(c0, c1, t):
    c0, c1 = np.asarray(c0, float), np.asarray(c1, float)
    return c0 + (c1 - c0) * t[..., None]


def disk(u, v, cx, cy, r):
    return (u - cx) ** 2 + (v - cy) ** 2 < r * r


def to_buffer(img):
    return ImageBuffer(np.clip(np.floor(img * 255 + 0.5), 0, 255).astype(np.uint8))


# ---------------------------------------------------------------------------
# content: simple scenes with large structures and some texture


def landscape(rng):
    u, v = grid()
    img = lerp((0.35, 0.55, 0.9), (0.85, 0.9, 1.0), v * 1.6)
    img[disk(u, v, 0.75, 0.2, 0.09)] = (1.0, 0.85, 0.3)
    hill = 0.55 + 0.08 * np.sin(u * 7 + 1) + 0.05 * value_noise(rng, 3)
    ground = v > hill
    img[ground] = lerp((0.2, 0.5, 0.15), (0.1, 0.3, 0.05), v)[ground]
    return img


def house(rng):
    u, v = grid()
    img = lerp((0.5, 0.7, 0.95), (0.9, 0.95, 1.0), v)
    img[v > 0.75] = (0.3, 0.6, 0.2)
    body = (u > 0.25) & (u < 0.75) & (v > 0.45) & (v < 0.8)
    img[body] = (0.8, 0.4, 0.3)
    roof = (v < 0.45) & (v > 0.2) & (np.abs(u - 0.5) < (v - 0.2) * 1.1)
    img[roof] = (0.4, 0.15, 0.1)
    img[(u > 0.45) & (u < 0.55) & (v > 0.62) & (v < 0.8)] = (0.3, 0.2, 0.1)
    for x0 in (0.3, 0.6):
        img[(u > x0) & (u < x0 + 0.1) & (v > 0.5) & (v < 0.6)] = (0.9, 0.9, 0.6)
    return img * (0.9 + 0.1 * value_noise(rng, 8))[..., None]


def still_life(rng):
    u, v = grid()
    img = lerp((0.6, 0.5, 0.4), (0.3, 0.25, 0.2), v)
    img[v > 0.7] = (0.55, 0.35, 0.2)
    for cx, cy, r, col in ((0.3, 0.6, 0.15, (0.9, 0.1, 0.1)), (0.62, 0.58, 0.17, (0.95, 0.75, 0.1)),
                           (0.48, 0.42, 0.12, (0.2, 0.6, 0.2))):
        m = disk(u, v, cx, cy, r)
        shade = 1.2 - 1.5 * np.hypot(u - cx + r / 3, v - cy + r / 3)
        img[m] = (np.asarray(col) * np.clip(shade, 0.3, 1.2)[..., None])[m]
    return img


def portrait(rng):
    u, v = grid()
    img = lerp((0.2, 0.3, 0.5), (0.1, 0.1, 0.2), u)
    face = ((u - 0.5) / 0.25) ** 2 + ((v - 0.45) / 0.32) ** 2 < 1
    img[face] = (0.95, 0.75, 0.6)
    img[((u - 0.5) / 0.3) ** 2 + ((v - 0.2) / 0.15) ** 2 < 1] = (0.25, 0.15, 0.05)
    for ex in (0.4, 0.6):
        img[disk(u, v, ex, 0.42, 0.035)] = (0.1, 0.1, 0.1)
    mouth = (np.abs(v - 0.6 - 0.1 * (u - 0.5) ** 2) < 0.015) & (np.abs(u - 0.5) < 0.1)
    img[mouth] = (0.7, 0.2, 0.2)
    img[v > 0.82] = (0.3, 0.3, 0.6)
    return img


def lake(rng):
    u, v = grid()
    img = lerp((0.9, 0.6, 0.4), (0.4, 0.4, 0.7), v * 2)
    ridge = 0.45 - 0.15 * np.abs(np.sin(u * 4)) - 0.05 * value_noise(rng, 4)
    img[v > ridge] = (0.25, 0.2, 0.3)
    water = v > 0.55
    mirror = np.clip(1.1 - v, 0, 1)
    ripple = 0.05 * np.sin(v * 120)
    img[water] = lerp((0.2, 0.3, 0.5), (0.5, 0.5, 0.7), mirror + ripple)[water]
    return img


def skyline(rng):
    u, v = grid()
    img = lerp((0.05, 0.05, 0.2), (0.5, 0.3, 0.5), v)
    x = 0.0
    while x < 1:
        w = 0.05 + 0.08 * rng.random()
        top = 0.3 + 0.4 * rng.random()
        m = (u >= x) & (u < x + w) & (v > top)
        img[m] = 0.1 + 0.15 * rng.random()
        win = m & (np.sin(u * 200) > 0.3) & (np.sin(v * 150) > 0.3) & (rng.random(u.shape) > 0.4)
        img[win] = (1.0, 0.9, 0.5)
        x += w + 0.01
    return img


def checker_room(rng):
    u, v = grid()
    img = lerp((0.85, 0.8, 0.7), (0.6, 0.55, 0.5), v)
    floor = v > 0.55
    depth = (v - 0.55) / 0.45 + 1e-3
    pu = (u - 0.5) / depth
    pv = 1 / depth
    check = ((np.floor(pu * 3) + np.floor(pv * 1.5)) % 2).astype(float)
    img[floor] = lerp((0.1, 0.1, 0.1), (0.95, 0.95, 0.95), check)[floor]
    img[(u > 0.3) & (u < 0.45) & (v > 0.2) & (v < 0.45)] = (0.3, 0.5, 0.8)
    return img


def flowers(rng):
    u, v = grid()
    img = lerp((0.2, 0.45, 0.15), (0.1, 0.3, 0.1), value_noise(rng, 4))
    for _ in range(14):
        cx, cy = rng.random(2)
        col = rng.choice([(0.9, 0.2, 0.3), (1.0, 0.9, 0.2), (0.8, 0.5, 0.9), (1.0, 1.0, 1.0)])
        ang = np.arctan2(v - cy, u - cx)
        r = np.hypot(u - cx, v - cy)
        petal = r < 0.06 * (0.6 + 0.4 * np.abs(np.cos(2.5 * ang)))
        img[petal] = col
        img[r < 0.015] = (0.9, 0.6, 0.1)
    return img


def mountains(rng):
    u, v = grid()
    img = lerp((0.6, 0.75, 0.95), (0.95, 0.95, 1.0), v * 1.5)
    for k, col in enumerate(((0.5, 0.5, 0.6), (0.35, 0.4, 0.45), (0.2, 0.3, 0.2))):
        h = 0.3 + 0.15 * k + 0.2 * value_noise(rng, 2 + k, octaves=3) - 0.1
        m = v > h
        img[m] = col
        snow = m & (v < h + 0.04) & (k == 0)
        img[snow] = (1.0, 1.0, 1.0)
    return img


def boat(rng):
    u, v = grid()
    img = lerp((0.7, 0.85, 1.0), (0.4, 0.6, 0.9), v)
    sea = v > 0.6
    img[sea] = lerp((0.1, 0.3, 0.6), (0.05, 0.2, 0.4), v + 0.05 * np.sin(u * 40 + v * 30))[sea]
    hull = (v > 0.52) & (v < 0.62) & (np.abs(u - 0.5) < 0.25 - (v - 0.52) * 1.5)
    img[hull] = (0.5, 0.25, 0.1)
    sail = (u > 0.5) & (u < 0.5 + (0.52 - v) * 0.8) & (v > 0.15) & (v < 0.52)
    img[sail] = (0.98, 0.98, 0.95)
    img[(np.abs(u - 0.5) < 0.008) & (v > 0.12) & (v < 0.55)] = (0.2, 0.1, 0.05)
    return img


CONTENT = (landscape, house, still_life, portrait, lake, skyline, checker_room, flowers,
           mountains, boat)


# ---------------------------------------------------------------------------
# style: textures with strong colour and pattern statistics


def swirls(rng):
    u, v = grid()
    ang = np.arctan2(v - 0.5, u - 0.5)
    r = np.hypot(u - 0.5, v - 0.5)
    t = 0.5 + 0.5 * np.sin(18 * r + 4 * ang + 3 * value_noise(rng, 4))
    return lerp((0.05, 0.1, 0.4), (0.95, 0.85, 0.2), t)


def mosaic(rng):
    u, v = grid()
    pts = rng.random((40, 2))
    cols = rng.random((40, 3))
    d = (u[..., None] - pts[:, 0]) ** 2 + (v[..., None] - pts[:, 1]) ** 2
    order = np.sort(d, axis=-1)
    img = cols[d.argmin(-1)]
    edge = np.sqrt(order[..., 1]) - np.sqrt(order[..., 0]) < 0.01
    img[edge] = 0.05
    return img


def brush_strokes(rng):
    u, v = grid()
    img = np.full((SIZE, SIZE, 3), (0.9, 0.85, 0.75))
    palette = np.array([(0.8, 0.2, 0.1), (0.1, 0.3, 0.7), (0.9, 0.7, 0.1), (0.1, 0.5, 0.3)])
    for _ in range(160):
        cx, cy = rng.random(2)
        a = rng.normal(0.6, 0.3)
        du, dv = u - cx, v - cy
        along = du * np.cos(a) + dv * np.sin(a)
        across = -du * np.sin(a) + dv * np.cos(a)
        m = (np.abs(along) < 0.08) & (np.abs(across) < 0.012)
        img[m] = palette[rng.integers(len(palette))] * (0.8 + 0.4 * rng.random())
    return img


def pointillism(rng):
    u, v = grid()
    base = lerp((0.9, 0.5, 0.2), (0.2, 0.4, 0.8), v)
    img = base * 0.5
    for _ in range(500):
        cx, cy = rng.random(2)
        m = disk(u, v, cx, cy, 0.012 + 0.01 * rng.random())
        img[m] = np.clip(base[int(cy * (SIZE - 1)), int(cx * (SIZE - 1))] + rng.normal(0, 0.2, 3), 0, 1)
    return img


def rings(rng):
    u, v = grid()
    img = np.zeros((SIZE, SIZE, 3))
    for _ in range(6):
        cx, cy = rng.random(2)
        r = np.hypot(u - cx, v - cy)
        img += 0.25 * (0.5 + 0.5 * np.sin(r * 60 + rng.random() * 6))[..., None] * rng.random(3)
    return img


def plaid(rng):
    u, v = grid()
    a = (np.sin(u * 2 * np.pi * 6) > 0.3).astype(float)
    b = (np.sin(v * 2 * np.pi * 6) > 0.3).astype(float)
    c = (np.sin((u + v) * 2 * np.pi * 24) > 0.6).astype(float)
    img = np.full((SIZE, SIZE, 3), (0.55, 0.1, 0.1))
    img = img + 0.35 * a[..., None] * np.array((0.2, 0.6, 0.2)) + 0.35 * b[..., None] * np.array((0.1, 0.2, 0.7))
    return img * (0.85 + 0.15 * c[..., None])


def marble(rng):
    u, v = grid()
    t = 0.5 + 0.5 * np.sin((u + v) * 10 + 8 * value_noise(rng, 3, octaves=5))
    return lerp((0.15, 0.15, 0.2), (0.95, 0.93, 0.88), t ** 0.5)


def mondrian(rng):
    img = np.full((SIZE, SIZE, 3), 0.95)
    xs = np.sort(rng.integers(10, SIZE - 10, 4))
    ys = np.sort(rng.integers(10, SIZE - 10, 4))
    cols = [(0.85, 0.1, 0.1), (0.1, 0.2, 0.7), (0.95, 0.85, 0.1)]
    bx = np.concatenate(([0], xs, [SIZE]))
    by = np.concatenate(([0], ys, [SIZE]))
    for i in range(len(by) - 1):
        for j in range(len(bx) - 1):
            if rng.random() < 0.3:
                img[by[i]:by[i + 1], bx[j]:bx[j + 1]] = cols[rng.integers(3)]
    for x in xs:
        img[:, x - 2:x + 2] = 0.02
    for y in ys:
        img[y - 2:y + 2] = 0.02
    return img


def zigzag(rng):
    u, v = grid()
    z = np.abs(((u * 8) % 2) - 1) * 0.12
    band = np.floor((v + z) * 10).astype(int) % 4
    palette = np.array([(0.1, 0.1, 0.1), (0.9, 0.4, 0.1), (0.95, 0.9, 0.8), (0.2, 0.5, 0.6)])
    return palette[band]


def clouds(rng):
    n = value_noise(rng, 2, octaves=6)
    return lerp((0.5, 0.1, 0.5), (1.0, 0.7, 0.4), (n - n.min()) / (n.max() - n.min()))


STYLE = (swirls, mosaic, brush_strokes, pointillism, rings, plaid, marble, mondrian, zigzag,
         clouds)


def main():
    for kind, gens in (("content", CONTENT), ("style", STYLE)):
        out = ROOT / kind
        out.mkdir(parents=True, exist_ok=True)
        for i, gen in enumerate(gens):
            rng = np.random.default_rng(1000 * (kind == "style") + i)
            img = np.clip(gen(rng), 0, 1)
            save(to_buffer(img), out / f"{i:02d}_{gen.__name__}.ppm")
            print(out / f"{i:02d}_{gen.__name__}.ppm")


if __name__ == "__main__":
    main()
