"""Central finite differences, independent of the package's backward code."""
import numpy as np


def numerical_grad(f, x, h=1e-4):
    """d f / d x by central differences; ``f`` returns ``(value, kink_signature)``.

    Entries whose +h and -h evaluations see different relu masks straddle
    a kink, where the derivative is undefined; they come back as NaN.
    """
    g = np.empty_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp, sp = f()
        flat[i] = old - h
        fm, sm = f()
        flat[i] = old
        gf[i] = np.nan if not _same(sp, sm) else (fp - fm) / (2 * h)
    return g


def _same(a, b):
    if a is None or b is None:
        return True
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def max_rel_error(analytic, numeric, floor=1e-8):
    mask = ~np.isnan(numeric)
    a, n = analytic[mask], numeric[mask]
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor),
                        initial=0.0))


def tape_masks(tape):
    """Relu activation patterns recorded on a tape."""
    return [y > 0 for (layer, _, y) in tape._records if layer.activation == "relu"]


# criterion lines collected by test_acceptance and echoed in the terminal summary
ACCEPTANCE = []


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    print(line)
    ACCEPTANCE.append((number, line))
    return ok
