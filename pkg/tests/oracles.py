"""Independent reference implementations used to check the vectorised code.

Everything here is written as plain per-element Python loops on purpose.
"""
from __future__ import annotations

import math

import numpy as np

from evlink.events import EventStream, SensorGeometry


def random_stream(rng: np.random.Generator, n: int, width: int = 64, height: int = 64, t_max: int = 30_000):
    t = np.sort(rng.integers(0, t_max, size=n))
    return EventStream(
        SensorGeometry(width, height),
        t,
        rng.integers(0, width, size=n),
        rng.integers(0, height, size=n),
        rng.choice([-1, 1], size=n),
    )


# ----------------------------------------------------------------- encoders


def stacking_loop(stream: EventStream):
    g = stream.geometry
    out = [[0] * g.width for _ in range(g.height)]
    for ev in stream:
        out[ev.y][ev.x] += 1
    return np.array(out, dtype=np.float64)


def time_surface_loop(stream: EventStream, tau: float, t_ref: int):
    g = stream.geometry
    last = {}
    for ev in stream:
        key = (ev.y, ev.x)
        last[key] = max(last.get(key, ev.t), ev.t)
    out = np.zeros((g.height, g.width))
    for (y, x), t in last.items():
        out[y, x] = math.exp((t - t_ref) / tau)
    return out


def frequency_loop(stream: EventStream):
    counts = stacking_loop(stream)
    out = np.zeros_like(counts)
    for y in range(counts.shape[0]):
        for x in range(counts.shape[1]):
            out[y, x] = 1.0 - 2.0 / (math.exp(counts[y, x]) + 1.0)
    return out


# ----------------------------------------------------------------- simulator


def _bilinear_scalar(img, x, y):
    h, w = len(img), len(img[0])
    x0, y0 = math.floor(x), math.floor(y)
    fx, fy = x - x0, y - y0

    def px(yy, xx):
        return img[min(max(yy, 0), h - 1)][min(max(xx, 0), w - 1)]

    top = px(y0, x0) * (1.0 - fx) + px(y0, x0 + 1) * fx
    bottom = px(y0 + 1, x0) * (1.0 - fx) + px(y0 + 1, x0 + 1) * fx
    return top * (1.0 - fy) + bottom * fy


def dvs_oracle(pixels, times, dxs, dys, threshold: float, epsilon: float):
    """Per-pixel log-difference accumulation. Returns {(x, y): [polarities...]} and the total count."""
    img = [list(map(float, row)) for row in pixels]
    h, w = len(img), len(img[0])
    events = {}
    total = 0
    for y in range(h):
        for x in range(w):
            ref = None
            for k in range(len(times)):
                v = _bilinear_scalar(img, x - float(dxs[k]), y - float(dys[k]))
                lv = float(np.log(max(v, epsilon)))
                if ref is None:
                    ref = lv
                    continue
                diff = lv - ref
                n = math.floor(abs(diff) / threshold)
                if n:
                    sign = 1 if diff > 0 else -1
                    events.setdefault((x, y), []).extend([sign] * n)
                    total += n
                    ref += sign * n * threshold
    return events, total


# ----------------------------------------------------------------- gradients


def finite_difference(f, arrays: dict, h: float = 1e-5) -> dict:
    """Central differences of scalar f() w.r.t. every entry of every array (mutated in place)."""
    out = {}
    for name, a in arrays.items():
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + h
            up = f()
            a[i] = old - h
            down = f()
            a[i] = old
            g[i] = (up - down) / (2 * h)
        out[name] = g
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """||a - b|| / max(||a||, ||b||), 0 when both norms are below ``floor``."""
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale < floor else float(np.linalg.norm(a - b) / scale)


# ----------------------------------------------------------------- retrieval


def ap_from_relevance(relevant, total):
    hits, s = 0, 0.0
    for r, rel in enumerate(relevant, start=1):
        if rel:
            hits += 1
            s += hits / r
    return s / total


def permutation_map(instance_ids, query_instances, trials: int, seed: int) -> float:
    """Expected mAP under uniformly random rankings, by Monte Carlo."""
    rng = np.random.default_rng(seed)
    ids = np.asarray(instance_ids)
    aps = []
    for _ in range(trials):
        for q in query_instances:
            order = rng.permutation(len(ids))
            rel = ids[order] == q
            aps.append(ap_from_relevance(rel, int(np.sum(ids == q))))
    return float(np.mean(aps))


# ----------------------------------------------------------------- tiny network


def tiny_network_losses(seed: int = 0):
    """An 8x8-input, d=8, 3-instance, n=2 network in float64 and a builder per loss.

    Returns (params, builders) where each builder maps a ParameterSet to a scalar
    Tensor computed through the generators and the relevant heads.
    """
    from evlink import losses
    from evlink.nets import (
        NetworkSpec,
        classifier_logits,
        forward_classifier,
        forward_discriminator,
        forward_generator,
        init_params,
    )

    rng = np.random.default_rng(seed)
    spec = NetworkSpec(num_classes=3, input_size=8, conv_channels=(2, 3, 2), embed_dim=8, disc_hidden=4)
    params = init_params(spec, seed, dtype=np.float64)
    xe = rng.uniform(0, 1, (2, 3, 8, 8))
    xr = rng.uniform(0, 1, (2, 3, 8, 8))
    s = np.array([1, 0])
    le, lr = np.array([0, 1]), np.array([0, 2])

    def feats(p):
        return forward_generator(spec, p, xe, "event"), forward_generator(spec, p, xr, "color")

    def l_dis(p):
        fe, fr = feats(p)
        return losses.loss_discriminator(forward_discriminator(p, fe), forward_discriminator(p, fr))

    def l_id(p):
        fe, fr = feats(p)
        return losses.loss_identity(forward_classifier(p, fe), forward_classifier(p, fr), le, lr)

    def l_ct(p):
        fe, fr = feats(p)
        return losses.loss_contrastive(fe, fr, s, margin=1.0)

    def l_total(p):
        return losses.loss_total(l_id(p), l_ct(p), l_dis(p), 1.0, 0.01, 0.01)

    def l_id_logits(p):
        fe, fr = feats(p)
        return losses.loss_identity_from_logits(classifier_logits(p, fe), classifier_logits(p, fr), le, lr)

    builders = {"L_dis": l_dis, "L_id": l_id, "L_ct": l_ct, "L": l_total, "L_id_logits": l_id_logits}
    return params, builders


def network_gradient_error(params, build, h: float = 1e-6) -> float:
    """Worst per-tensor relative error between backprop and central differences."""
    from evlink.autograd import backprop
    from evlink.nets import ParameterSet
    from evlink.autograd import Tensor

    grads = backprop(build(params), dict(params.items()))
    arrays = {k: t.data.copy() for k, t in params.items()}

    def f():
        return build(ParameterSet({k: Tensor(v) for k, v in arrays.items()})).item()

    fd = finite_difference(f, arrays, h)
    # central differences carry ~1e-10 round-off, so exactly-zero gradients
    # (e.g. a bias that cancels in f_e - f_r) need an absolute floor
    return max(relative_error(grads[k], fd[k], floor=1e-7) for k in arrays)
