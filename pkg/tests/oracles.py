"""Independent reference implementations used to pin expected values.

Everything here is written as directly as possible (scalar loops, naive
O(N^2) transforms, per-pixel colorspace math) and deliberately shares no
code with the package.
"""

import math

import numpy as np


def conv2d_oracle(x, w, b):
    """Triple-loop convolution, stride 1, zero padding (k-1)//2."""
    n, ci, h, wd = x.shape
    co, _, k, _ = w.shape
    p = k // 2
    out = np.zeros((n, co, h, wd))
    for ni in range(n):
        for o in range(co):
            for y in range(h):
                for xx in range(wd):
                    acc = float(b[o])
                    for i in range(ci):
                        for dy in range(k):
                            for dx in range(k):
                                sy, sx = y + dy - p, xx + dx - p
                                if 0 <= sy < h and 0 <= sx < wd:
                                    acc += w[o, i, dy, dx] * x[ni, i, sy, sx]
                    out[ni, o, y, xx] = acc
    return out


def resize_oracle(x, th, tw):
    """Per-output-pixel bilinear resize, half-pixel centers, clamped."""
    n, c, h, w = x.shape
    out = np.zeros((n, c, th, tw))
    for oy in range(th):
        sy = min(max((oy + 0.5) * h / th - 0.5, 0.0), h - 1)
        y0 = int(math.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for ox in range(tw):
            sx = min(max((ox + 0.5) * w / tw - 0.5, 0.0), w - 1)
            x0 = int(math.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            out[:, :, oy, ox] = ((1 - fy) * (1 - fx) * x[:, :, y0, x0]
                                 + (1 - fy) * fx * x[:, :, y0, x1]
                                 + fy * (1 - fx) * x[:, :, y1, x0]
                                 + fy * fx * x[:, :, y1, x1])
    return out


def dft2_full_oracle(img):
    """Naive O(N^2) full 2-D DFT of one real (h, w) plane."""
    h, w = img.shape
    out = np.zeros((h, w), dtype=complex)
    for p in range(h):
        for q in range(w):
            acc = 0.0 + 0.0j
            for y in range(h):
                for x in range(w):
                    acc += img[y, x] * np.exp(-2j * np.pi * (p * y / h + q * x / w))
            out[p, q] = acc
    return out


def rfft2_oracle(img):
    """Half-spectrum of the naive DFT: (h, w//2 + 1) complex."""
    return dft2_full_oracle(img)[:, : img.shape[1] // 2 + 1]


def psnr_oracle(ref, test):
    diff = (ref.astype(np.float64) - test.astype(np.float64)).ravel()
    m = float(np.mean(diff * diff))
    if m == 0.0:
        return 100.0
    return min(100.0, 10.0 * math.log10(1.0 / m))


def _gauss1d(size, sigma):
    half = (size - 1) / 2.0
    k = np.array([math.exp(-((i - half) ** 2) / (2 * sigma * sigma))
                  for i in range(size)])
    return k / k.sum()


def ssim_oracle(ref, test, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Window-by-window SSIM on BT.601 luminance."""
    def luma(img):
        if img.shape[0] == 1:
            return img[0].astype(np.float64)
        return (0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]).astype(np.float64)

    x, y = luma(ref), luma(test)
    g1 = _gauss1d(window, sigma)
    g2 = np.outer(g1, g1)
    c1, c2 = k1 * k1, k2 * k2
    h, w = x.shape
    vals = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            wx = x[i:i + window, j:j + window]
            wy = y[i:i + window, j:j + window]
            mx = float((g2 * wx).sum())
            my = float((g2 * wy).sum())
            vxx = float((g2 * wx * wx).sum()) - mx * mx
            vyy = float((g2 * wy * wy).sum()) - my * my
            vxy = float((g2 * wx * wy).sum()) - mx * my
            vals.append(((2 * mx * my + c1) * (2 * vxy + c2))
                        / ((mx * mx + my * my + c1) * (vxx + vyy + c2)))
    return float(np.mean(vals))


def _srgb_to_lab_pixel(r, g, b):
    def lin(c):
        return c / 12.92 if c <= 0.04045 else ((c + 0.055) / 1.055) ** 2.4

    rl, gl, bl = lin(r), lin(g), lin(b)
    x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl
    y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl
    z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl
    x, y, z = x / 0.95047, y / 1.0, z / 1.08883
    d = 6.0 / 29.0

    def f(t):
        return t ** (1.0 / 3.0) if t > d ** 3 else t / (3 * d * d) + 4.0 / 29.0

    fx, fy, fz = f(x), f(y), f(z)
    return 116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)


def uciqe_oracle(img):
    """Per-pixel loop UCIQE with the same conventions as the package."""
    c, h, w = img.shape
    chroma = np.zeros((h, w))
    lum = np.zeros((h, w))
    sat = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            r, g, b = (float(img[0, y, x]), float(img[1, y, x]),
                       float(img[2, y, x]))
            ll, la, lb = _srgb_to_lab_pixel(r, g, b)
            ll, la, lb = ll / 100.0, la / 100.0, lb / 100.0
            lum[y, x] = ll
            chroma[y, x] = math.hypot(la, lb)
            mx, mn = max(r, g, b), min(r, g, b)
            sat[y, x] = 0.0 if mx == 0 else (mx - mn) / mx
    sigma_c = float(np.std(chroma))
    flat = np.sort(lum.ravel())
    k = max(1, int(round(0.01 * flat.size)))
    conl = float(np.mean(flat[-k:]) - np.mean(flat[:k]))
    return 0.4680 * sigma_c + 0.2745 * conl + 0.2576 * float(np.mean(sat))


def _sobel_mag_oracle(plane):
    h, w = plane.shape
    kx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            gx = gy = 0.0
            for dy in range(3):
                for dx in range(3):
                    sy = min(max(y + dy - 1, 0), h - 1)
                    sx = min(max(x + dx - 1, 0), w - 1)
                    gx += kx[dy][dx] * plane[sy, sx]
                    gy += kx[dx][dy] * plane[sy, sx]
            out[y, x] = math.hypot(gx, gy)
    return out


def uiqm_oracle(img, block=8):
    """Loop-based UIQM with the same conventions as the package."""
    img = img.astype(np.float64)
    h8 = (img.shape[1] // block) * block
    w8 = (img.shape[2] // block) * block
    img = img[:, :h8, :w8]
    r, g, b = img[0], img[1], img[2]

    def trimmed_stats(x):
        s = np.sort(x.ravel())
        t = int(0.1 * s.size)
        if 2 * t < s.size:
            s = s[t:s.size - t]
        mu = float(np.mean(s))
        return mu, float(np.mean((s - mu) ** 2))

    mu_rg, s2_rg = trimmed_stats(r - g)
    mu_yb, s2_yb = trimmed_stats((r + g) / 2 - b)
    uicm = -0.0268 * math.hypot(mu_rg, mu_yb) + 0.1586 * math.sqrt(s2_rg + s2_yb)

    def eme(plane):
        k2, k1 = plane.shape[0] // block, plane.shape[1] // block
        total = 0.0
        for i in range(k2):
            for j in range(k1):
                blk = plane[i * block:(i + 1) * block, j * block:(j + 1) * block]
                lo, hi = float(blk.min()), float(blk.max())
                if lo > 0 and hi > 0:
                    total += math.log(hi / lo)
        return 2.0 / (k1 * k2) * total

    uism = (0.299 * eme(_sobel_mag_oracle(r) * r)
            + 0.587 * eme(_sobel_mag_oracle(g) * g)
            + 0.114 * eme(_sobel_mag_oracle(b) * b))

    gray = 0.299 * r + 0.587 * g + 0.114 * b
    gamma = 1026.0
    k2, k1 = gray.shape[0] // block, gray.shape[1] // block
    s = 0.0
    for i in range(k2):
        for j in range(k1):
            blk = gray[i * block:(i + 1) * block, j * block:(j + 1) * block]
            lo, hi = float(blk.min()), float(blk.max())
            top = gamma * (hi - lo) / (gamma - lo)
            bot = hi + lo - hi * lo / gamma
            if bot != 0.0 and top > 0.0:
                s += (top / bot) * math.log(top / bot)
    uiconm = gamma - gamma * (1.0 - s / gamma) ** (1.0 / (k1 * k2))
    return 0.0282 * uicm + 0.2953 * uism + 3.5753 * uiconm


def mcem_pixel_oracle(x, branch_params):
    """Per-pixel two-layer MLP over four channel groups plus the residual.

    branch_params: list of four ((w1, b1), (w2, b2)) tuples with 1x1 weights
    of shape (cq, cq, 1, 1).
    """
    n, c, h, w = x.shape
    cq = c // 4
    out = np.zeros_like(x, dtype=np.float64)
    for ni in range(n):
        for y in range(h):
            for xx in range(w):
                for br in range(4):
                    (w1, b1), (w2, b2) = branch_params[br]
                    vin = x[ni, br * cq:(br + 1) * cq, y, xx].astype(np.float64)
                    hid = np.maximum(w1[:, :, 0, 0] @ vin + b1, 0.0)
                    vout = w2[:, :, 0, 0] @ hid + b2
                    out[ni, br * cq:(br + 1) * cq, y, xx] = vout
    return out + x


def pixel_attention_oracle(x, squeeze, excite):
    """Per-pixel squeeze/excite gate; squeeze/excite are (w, b) tuples."""
    n, c, h, w = x.shape
    (w1, b1), (w2, b2) = squeeze, excite
    out = np.zeros_like(x, dtype=np.float64)
    for ni in range(n):
        for y in range(h):
            for xx in range(w):
                vin = x[ni, :, y, xx].astype(np.float64)
                hid = np.maximum(w1[:, :, 0, 0] @ vin + b1, 0.0)
                pre = (w2[:, :, 0, 0] @ hid + b2).item()
                gate = 1.0 / (1.0 + math.exp(-pre))
                out[ni, :, y, xx] = vin * gate
    return out
