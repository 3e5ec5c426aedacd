"""Brute-force oracles shared by the test modules.

Everything here is written the slow, obvious way (event loops, nested
dicts, scalar arithmetic) so it shares no code path with the package
implementations it cross-checks.
"""

import math
from collections import defaultdict

import numpy as np

from spikesr.events import EventStream


def random_stream(rng, width, height, dur_ms, n_events, t0=0):
    """Uniform random events over the full window, declared span [t0, t0+dur]."""
    dur_us = int(dur_ms * 1000)
    t = np.sort(rng.integers(0, dur_us + 1, n_events)) + t0
    x = rng.integers(0, width, n_events)
    y = rng.integers(0, height, n_events)
    p = rng.choice([1, -1], n_events)
    return EventStream(t, x, y, p, width, height, t0=t0, t1=t0 + dur_us)


def voxel_oracle(stream, steps, dt=1.0, origin=None):
    """Per-event loop binning; returns (counts dict keyed (c,y,x,bin), dropped)."""
    t0 = stream.t0 if origin is None else origin
    dt_us = dt * 1000.0
    counts = defaultdict(int)
    dropped = 0
    for e in stream:
        rel = e.t - t0
        b = math.floor(rel / dt_us)
        if b == steps and rel == steps * dt_us:
            b = steps - 1
        if 0 <= b < steps:
            counts[(0 if e.p == 1 else 1, e.y, e.x, b)] += 1
        else:
            dropped += 1
    return counts, dropped


def mse_temporal_oracle(out_stream, gt_stream, steps, t0):
    a, _ = voxel_oracle(out_stream, steps, origin=t0)
    b, _ = voxel_oracle(gt_stream, steps, origin=t0)
    total = 0
    for key in set(a) | set(b):
        total += (a.get(key, 0) - b.get(key, 0)) ** 2
    return total


def mse_spatial_oracle(out_stream, gt_stream, steps, t0, block_ms=50):
    blocks_a = defaultdict(int)
    blocks_b = defaultdict(int)
    for counts, blocks in ((voxel_oracle(out_stream, steps, origin=t0)[0], blocks_a),
                           (voxel_oracle(gt_stream, steps, origin=t0)[0], blocks_b)):
        for (c, y, x, b), v in counts.items():
            blocks[(c, y, x, b // block_ms)] += v
    total = 0
    for key in set(blocks_a) | set(blocks_b):
        total += (blocks_a.get(key, 0) - blocks_b.get(key, 0)) ** 2
    return total


def n_p_oracle(gt_stream, steps, t0):
    pixels = set()
    for (_, y, x, _b) in voxel_oracle(gt_stream, steps, origin=t0)[0]:
        pixels.add((y, x))
    return len(pixels)


def pa_oracle(out_stream, gt_stream, steps, t0):
    """Dominant-polarity match rate over jointly occupied untied cells."""
    def dominant(stream):
        pos = defaultdict(int)
        neg = defaultdict(int)
        for (c, y, x, b), v in voxel_oracle(stream, steps, origin=t0)[0].items():
            (pos if c == 0 else neg)[(y, x, b)] += v
        dom = {}
        for key in set(pos) | set(neg):
            d = pos.get(key, 0) - neg.get(key, 0)
            dom[key] = 0 if d == 0 else (1 if d > 0 else -1)
        return dom

    da, db = dominant(out_stream), dominant(gt_stream)
    omega = [k for k in set(da) & set(db) if da[k] != 0 and db[k] != 0]
    if not omega:
        return 100.0, True
    matches = sum(1 for k in omega if da[k] == db[k])
    return 100.0 * matches / len(omega), False


def rmse_st_oracle(out_stream, gt_stream, steps):
    """Stream-level RMSE assembled from the per-part oracles above."""
    spans = [(s.t0, s.t1) for s in (out_stream, gt_stream) if len(s)]
    t0 = min(a for a, _ in spans)
    t1 = max(b for _, b in spans)
    span_ms = (t1 - t0) / 1000.0
    mse_t = mse_temporal_oracle(out_stream, gt_stream, steps, t0)
    mse_s = mse_spatial_oracle(out_stream, gt_stream, steps, t0)
    n_p = n_p_oracle(gt_stream, steps, t0)
    return math.sqrt((mse_t + mse_s) / (span_ms * n_p)), mse_t, mse_s, n_p


def conv_drive_oracle(x, w, stride, pad):
    """Six-loop direct convolution of a [C, H, W, T] block."""
    cout, cin, kh, kw = w.shape
    _, h, wid, t = x.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wid + 2 * pad - kw) // stride + 1
    out = np.zeros((cout, oh, ow, t))
    for o in range(cout):
        for i in range(cin):
            for yy in range(oh):
                for xx in range(ow):
                    for dy in range(kh):
                        for dx in range(kw):
                            sy = yy * stride + dy - pad
                            sx = xx * stride + dx - pad
                            if 0 <= sy < h and 0 <= sx < wid:
                                out[o, yy, xx, :] += w[o, i, dy, dx] * x[i, sy, sx, :]
    return out


def upconv2x_oracle(x, w):
    """Scatter form of the 2x2 stride-2 transposed convolution."""
    cout, cin = w.shape[0], w.shape[1]
    _, h, wid, t = x.shape
    out = np.zeros((cout, 2 * h, 2 * wid, t))
    for o in range(cout):
        for i in range(cin):
            for yy in range(h):
                for xx in range(wid):
                    for dy in range(2):
                        for dx in range(2):
                            out[o, 2 * yy + dy, 2 * xx + dx, :] += w[o, i, dy, dx] * x[i, yy, xx, :]
    return out


def bilinear2x_oracle(x):
    """Per-output-pixel bilinear sampling at half-pixel centres, edge clamped."""
    c, h, w, t = x.shape
    out = np.zeros((c, 2 * h, 2 * w, t))
    for oy in range(2 * h):
        for ox in range(2 * w):
            sy = (oy + 0.5) / 2.0 - 0.5
            sx = (ox + 0.5) / 2.0 - 0.5
            y0, x0 = math.floor(sy), math.floor(sx)
            fy, fx = sy - y0, sx - x0
            y0c = min(max(y0, 0), h - 1)
            y1c = min(max(y0 + 1, 0), h - 1)
            x0c = min(max(x0, 0), w - 1)
            x1c = min(max(x0 + 1, 0), w - 1)
            out[:, oy, ox, :] = ((1 - fy) * (1 - fx) * x[:, y0c, x0c, :]
                                 + (1 - fy) * fx * x[:, y0c, x1c, :]
                                 + fy * (1 - fx) * x[:, y1c, x0c, :]
                                 + fy * fx * x[:, y1c, x1c, :])
    return out


def psp_oracle(x, kernel):
    """Direct causal convolution along the last axis."""
    out = np.zeros_like(x, dtype=float)
    T = x.shape[-1]
    L = len(kernel)
    it = np.ndindex(x.shape[:-1])
    for idx in it:
        for t in range(T):
            acc = 0.0
            for k in range(min(t + 1, L)):
                acc += kernel[k] * x[idx + (t - k,)]
            out[idx + (t,)] = acc
    return out
