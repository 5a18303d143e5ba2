"""Pure-Python reference kernels.

Bit-for-bit twin of ``_kernels.pyx``. Both use SplitMix64 and the same
inverse-CDF walk, so a compiled and an interpreted run with the same seed
produce identical trajectories.
"""

MASK64 = 0xFFFFFFFFFFFFFFFF
GAMMA = 0x9E3779B97F4A7C15
_INV_2_53 = 1.0 / 9007199254740992.0


def mix64(z):
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_state(seed, index):
    return mix64((seed & MASK64) ^ mix64((index + 1) & MASK64))


def next_u64(state):
    """Advance ``state``; returns ``(new_state, output)``."""
    state = (state + GAMMA) & MASK64
    return state, mix64(state)


def u64_to_uniform(x):
    return (x >> 11) * _INV_2_53


def pick(probs, alive, u):
    """First alive index whose running sum exceeds ``u``; last alive otherwise."""
    cum = 0.0
    last = -1
    for i in range(len(probs)):
        cum += probs[i]
        if alive[i]:
            last = i
            if u < cum:
                return i
    return last


def walk_batch(
    seed,
    start,
    n,
    node_child_start,
    node_child_count,
    node_leaf,
    child_node,
    child_prob,
    child_alive,
    n_readouts,
    readout_start,
    readout_count,
    readout_prob,
    readout_alive,
    out_leaf,
    out_readout,
):
    """Descend the outcome tree once per run, then draw each readout.

    Run ``start + r`` uses the stream ``derive_state(seed, start + r)``. One
    uniform is consumed per tree level and one per readout, in that order.
    """
    for r in range(n):
        state = derive_state(seed, start + r)
        node = 0
        while node_child_count[node] > 0:
            state, x = next_u64(state)
            u = u64_to_uniform(x)
            s = node_child_start[node]
            c = node_child_count[node]
            j = _pick_slice(child_prob, child_alive, s, c, u)
            node = child_node[s + j]
        leaf = node_leaf[node]
        out_leaf[r] = leaf
        for k in range(n_readouts):
            state, x = next_u64(state)
            u = u64_to_uniform(x)
            slot = leaf * n_readouts + k
            out_readout[r * n_readouts + k] = _pick_slice(
                readout_prob, readout_alive, readout_start[slot], readout_count[slot], u
            )


def _pick_slice(probs, alive, s, c, u):
    cum = 0.0
    last = -1
    for i in range(c):
        cum += probs[s + i]
        if alive[s + i]:
            last = i
            if u < cum:
                return i
    return last
