# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path loops for the three stopping rules.

Every path owns counter-based streams derived from ``key(seed, p)``: the grid
normals use the key itself, draw j being ``mix64(key + (j + 1) * GAMMA)``.
Bridge extremes at step j use ``mix64(sub + j * GAMMA)`` for fixed sub-keys,
whether or not they are needed, and refined sub-steps and the zero-atom coin
have streams of their own.  So the grid path of a given (seed, p) is the same
for every stopping rule and every target law, and results do not depend on the
order in which paths are run.  The pure-numpy module ``_fallback`` performs
the same arithmetic, vectorised over paths.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, log1p, exp, pow, fabs, INFINITY
from libc.stdint cimport uint64_t, int64_t, int8_t

cnp.import_array()

from . import _ziggurat

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL
cdef uint64_t PATH_SALT = 0x632BE59BD9B4E019ULL
cdef uint64_t MAX_SALT = 0xD1B54A32D192ED03ULL
cdef uint64_t MIN_SALT = 0xABC98388FB8FAC03ULL
cdef uint64_t MID_SALT = 0x8CB92BA72F3D8DD7ULL
cdef uint64_t ZERO_SALT = 0xDB4F0B9175AE2165ULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0
# bridge extremes are sampled only when the crossing probability exceeds exp(-40)
cdef double NEAR = 20.0
# Perkins step refinement: reach of the extremes in units of sqrt(h), boundary
# movement tolerated in units of sqrt(dt), and the maximum number of halvings
cdef double REFINE_REACH = 3.0
cdef double REFINE_TOL = 0.05
cdef int MAX_DEPTH = 24

# stop codes
cdef int8_t AY_STOP = 0
cdef int8_t PLUS_STOP = 1
cdef int8_t MINUS_STOP = 2
cdef int8_t ZERO_STOP = 3
cdef int8_t TRUNC_STOP = 4
cdef int8_t EXIT_STOP = 5


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t path_key(uint64_t seed, uint64_t path) noexcept nogil:
    return mix64(mix64(seed) ^ (path * GAMMA + PATH_SALT))


cdef inline uint64_t sub_key(uint64_t key, uint64_t salt) noexcept nogil:
    return mix64(key ^ salt)


cdef inline double unif_at(uint64_t key, uint64_t j) noexcept nogil:
    return (<double>(mix64(key + j * GAMMA) >> 11) + 0.5) * TWO_M53


cdef inline double unif(uint64_t key, uint64_t* ctr) noexcept nogil:
    ctr[0] += 1
    return (<double>(mix64(key + ctr[0] * GAMMA) >> 11) + 0.5) * TWO_M53


cdef uint64_t ZK[256]
cdef double ZW[256]
cdef double ZF[256]
cdef double ZR = _ziggurat.R
cdef uint64_t MASK52 = (1ULL << 52) - 1


def _load_tables():
    cdef Py_ssize_t i
    for i in range(256):
        ZK[i] = <uint64_t>_ziggurat.K[i]
        ZW[i] = _ziggurat.W[i]
        ZF[i] = _ziggurat.F[i]


_load_tables()


cdef inline double znorm(uint64_t key, uint64_t* ctr) noexcept nogil:
    # 256-layer ziggurat; one 64-bit word per draw on the fast path
    cdef uint64_t r, rabs
    cdef int idx
    cdef bint neg
    cdef double x, xx, yy
    while True:
        ctr[0] += 1
        r = mix64(key + ctr[0] * GAMMA)
        idx = <int>(r & 0xff)
        r >>= 8
        neg = (r & 1) != 0
        rabs = (r >> 1) & MASK52
        # branch-free sign: the sign bit is a coin flip the predictor cannot learn
        x = <double><int64_t>rabs * ZW[idx] * (1.0 - 2.0 * <double>neg)
        if rabs < ZK[idx]:
            return x
        if idx == 0:
            while True:
                xx = -log1p(-unif(key, ctr)) / ZR
                yy = -log1p(-unif(key, ctr))
                if yy + yy > xx * xx:
                    return -(ZR + xx) if neg else ZR + xx
        elif (ZF[idx - 1] - ZF[idx]) * unif(key, ctr) + ZF[idx] < exp(-0.5 * x * x):
            return x


cdef inline double table_at(const double* xs, const double* ys, Py_ssize_t n,
                            Py_ssize_t* hint, double x) noexcept nogil:
    # right-continuous linear interpolation; x must be non-decreasing between calls
    cdef Py_ssize_t j = hint[0], step = 1, lo, hi, mid
    if j + 1 < n and xs[j + 1] <= x:
        # gallop forward from the hint, then bisect
        lo = j + 1
        while lo + step < n and xs[lo + step] <= x:
            lo += step
            step *= 2
        hi = lo + step if lo + step < n else n
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if xs[mid] <= x:
                lo = mid
            else:
                hi = mid
        j = lo
    hint[0] = j
    if j + 1 >= n:
        return ys[n - 1]
    return ys[j] + (ys[j + 1] - ys[j]) * (x - xs[j]) / (xs[j + 1] - xs[j])


cdef struct Cost:
    int kind          # 0 none, 1 constant, 2 (a + sigma s)^-e capped, 3 table
    double a
    double sigma
    double e
    double cap
    const double* xs
    const double* ys
    Py_ssize_t n


cdef inline double cost_at(Cost* c, Py_ssize_t* hint, double s) noexcept nogil:
    cdef double v
    if c.kind == 1:
        return c.a
    if c.kind == 2:
        v = c.a + c.sigma * s
        if v <= 0:
            return c.cap
        v = pow(v, -c.e)
        return v if v < c.cap else c.cap
    if c.kind == 3:
        return table_at(c.xs, c.ys, c.n, hint, s)
    return 0.0


cdef inline bint near(double lvl, double x0, double x1, double dt) noexcept nogil:
    return (lvl - x0) * (lvl - x1) < NEAR * dt


cdef inline double bridge_max(double x0, double x1, double dt, double u) noexcept nogil:
    return 0.5 * (x0 + x1 + sqrt((x1 - x0) * (x1 - x0) - 2.0 * dt * log(u)))


cdef inline double bridge_min(double x0, double x1, double dt, double u) noexcept nogil:
    return 0.5 * (x0 + x1 - sqrt((x1 - x0) * (x1 - x0) - 2.0 * dt * log(u)))


def _cost(int kind, double a, double sigma, double e, double cap, const double[::1] xs, const double[::1] ys):
    # keeps the memoryviews alive with the struct
    return (kind, a, sigma, e, cap, xs, ys)


cdef Cost _unpack(tuple spec):
    cdef Cost c
    cdef const double[::1] xs = spec[5]
    cdef const double[::1] ys = spec[6]
    c.kind = spec[0]
    c.a = spec[1]
    c.sigma = spec[2]
    c.e = spec[3]
    c.cap = spec[4]
    c.xs = &xs[0]
    c.ys = &ys[0]
    c.n = xs.shape[0]
    return c


def _outputs(Py_ssize_t n):
    return (np.empty(n), np.empty(n), np.empty(n), np.empty(n), np.empty(n),
            np.empty(n, dtype=np.int8), np.empty(n, dtype=np.int64))


def run_ay(const double[::1] bx, const double[::1] by, double x_hat, tuple cost,
           Py_ssize_t n_paths, double dt, uint64_t seed, double level_cap,
           int64_t max_steps, bint bridge, Py_ssize_t first_path=0):
    """Stop at the first time W <= beta(S)."""
    out = _outputs(n_paths)
    cdef double[::1] ow = out[0], os_ = out[1], oi = out[2], ot = out[3], og = out[4]
    cdef int8_t[::1] oc = out[5]
    cdef int64_t[::1] on = out[6]
    cdef Cost c = _unpack(cost)
    # the memoryviews in ``cost`` stay referenced by the caller
    cdef const double* px = &bx[0]
    cdef const double* py = &by[0]
    cdef Py_ssize_t nb = bx.shape[0], p, hb, hg
    cdef uint64_t key, ctr, kmax, kmin
    cdef double sq = sqrt(dt), w, w1, S, I, M, m, b, g0, g1, integ, lo_lvl
    cdef int64_t steps
    cdef int8_t code
    with nogil:
        for p in range(n_paths):
            key = path_key(seed, <uint64_t>(p + first_path))
            kmax = sub_key(key, MAX_SALT)
            kmin = sub_key(key, MIN_SALT)
            ctr = 0
            hb = 0
            hg = 0
            w = 0.0
            S = 0.0
            I = 0.0
            integ = 0.0
            steps = 0
            b = table_at(px, py, nb, &hb, 0.0)
            g0 = cost_at(&c, &hg, 0.0)
            while True:
                if steps >= max_steps:
                    code = TRUNC_STOP
                    break
                w1 = w + sq * znorm(key, &ctr)
                steps += 1
                M = w1 if w1 > w else w
                m = w1 if w1 < w else w
                if bridge:
                    if near(S, w, w1, dt):
                        M = bridge_max(w, w1, dt, unif_at(kmax, <uint64_t>steps))
                    lo_lvl = I if I > b else b
                    if near(lo_lvl, w, w1, dt):
                        m = bridge_min(w, w1, dt, unif_at(kmin, <uint64_t>steps))
                if m < I:
                    I = m
                if bridge and m <= b:
                    # crossed beta(S) before any new maximum of this step
                    integ += g0 * dt
                    w = b
                    code = AY_STOP
                    break
                g1 = g0
                if M > S:
                    S = M
                    if S >= x_hat:
                        S = x_hat
                        integ += 0.5 * (g0 + cost_at(&c, &hg, S)) * dt
                        w = x_hat
                        code = AY_STOP
                        break
                    if S > level_cap:
                        integ += g0 * dt
                        w = w1
                        code = TRUNC_STOP
                        break
                    b = table_at(px, py, nb, &hb, S)
                    g1 = cost_at(&c, &hg, S)
                integ += 0.5 * (g0 + g1) * dt
                g0 = g1
                if w1 <= b:
                    w = b
                    code = AY_STOP
                    break
                if I < -level_cap:
                    w = w1
                    code = TRUNC_STOP
                    break
                w = w1
            ow[p] = w
            os_[p] = S
            oi[p] = I if I < w else w
            ot[p] = steps * dt
            og[p] = integ
            oc[p] = code
            on[p] = steps
    return out


cdef struct PkState:
    # tables
    const double* px
    const double* py
    const double* mx
    const double* my
    Py_ssize_t npl
    Py_ssize_t nmi
    Cost* c
    double tol
    bint bridge
    # path state
    uint64_t key
    uint64_t ctr
    uint64_t kmax
    uint64_t kmin
    uint64_t kmid
    uint64_t cmid
    uint64_t j
    Py_ssize_t hp
    Py_ssize_t hm
    Py_ssize_t hg
    double hi
    double lo
    double ap
    double am
    double g0
    double integ
    double w
    int8_t code


cdef inline double seg_slope(const double* xs, const double* ys, Py_ssize_t n, Py_ssize_t j) noexcept nogil:
    if j + 1 >= n:
        return 0.0
    return (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j])


cdef inline bint pk_refine(PkState* st, double w, double w1, double h) noexcept nogil:
    # split a step when the order of its maximum and minimum can matter: the path
    # is close to a running extreme and to the opposite boundary, which is steep
    cdef double r = REFINE_REACH * sqrt(h)
    if near(st.lo, w, w1, h) and near(st.am, w, w1, h) and \
            fabs(seg_slope(st.mx, st.my, st.nmi, st.hm)) * r > st.tol:
        return True
    return near(st.hi, w, w1, h) and near(st.ap, w, w1, h) and \
        fabs(seg_slope(st.px, st.py, st.npl, st.hp)) * r > st.tol


cdef inline bint pk_leaf(PkState* st, double w, double w1, double h, bint sub) noexcept nogil:
    # sub-steps of a refined step draw from the refinement stream, whole steps
    # from the step-indexed extreme streams
    cdef double M, m, g1, lo_lvl, dplus, dminus, s_old, i_old
    M = w1 if w1 > w else w
    m = w1 if w1 < w else w
    if st.bridge:
        if near(st.hi, w, w1, h):
            M = bridge_max(w, w1, h, unif(st.kmid, &st.cmid) if sub else unif_at(st.kmax, st.j))
        lo_lvl = st.lo if st.lo > st.ap else st.ap
        if near(lo_lvl, w, w1, h):
            m = bridge_min(w, w1, h, unif(st.kmid, &st.cmid) if sub else unif_at(st.kmin, st.j))
    g1 = st.g0
    s_old = st.hi
    i_old = st.lo
    if M > st.hi:
        st.hi = M
        st.ap = table_at(st.px, st.py, st.npl, &st.hp, M)
        g1 = cost_at(st.c, &st.hg, M)
    if m < st.lo:
        st.lo = m
        st.am = table_at(st.mx, st.my, st.nmi, &st.hm, -m)
    st.integ += 0.5 * (st.g0 + g1) * h
    st.g0 = g1
    # the boundaries only move away as S and I extend, so the extended levels
    # are used for the crossing test
    dplus = st.ap - m
    dminus = M - st.am
    if dplus >= 0 or dminus >= 0:
        # the stopping level is itself the running extreme on its own side
        if dplus >= dminus:
            st.w = st.ap
            st.lo = st.ap if st.ap < i_old else i_old
            st.code = PLUS_STOP
        else:
            st.w = st.am
            st.hi = st.am if st.am > s_old else s_old
            st.code = MINUS_STOP
        return True
    st.w = w1
    return False


cdef bint pk_split(PkState* st, double w, double w1, double h, int depth) noexcept nogil:
    """Exact Brownian bridge midpoint, then the two halves in order."""
    cdef double wm = 0.5 * (w + w1) + sqrt(0.25 * h) * znorm(st.kmid, &st.cmid)
    h = 0.5 * h
    depth += 1
    if depth < MAX_DEPTH and pk_refine(st, w, wm, h):
        if pk_split(st, w, wm, h, depth):
            return True
    elif pk_leaf(st, w, wm, h, True):
        return True
    if depth < MAX_DEPTH and pk_refine(st, wm, w1, h):
        return pk_split(st, wm, w1, h, depth)
    return pk_leaf(st, wm, w1, h, True)


cdef inline bint pk_step(PkState* st, double w, double w1, double h) noexcept nogil:
    """Advance over one step from w to w1; return True when the path stopped."""
    if st.bridge and pk_refine(st, w, w1, h):
        return pk_split(st, w, w1, h, 0)
    return pk_leaf(st, w, w1, h, False)


def run_perkins(const double[::1] px_, const double[::1] py_, const double[::1] mx_,
                const double[::1] my_, double zero_mass, tuple cost, Py_ssize_t n_paths,
                double dt, uint64_t seed, double level_cap, int64_t max_steps, bint bridge,
                Py_ssize_t first_path=0):
    """Stop when W <= alpha+(S) or W >= alpha-(I); mass at 0 by an initial uniform."""
    out = _outputs(n_paths)
    cdef double[::1] ow = out[0], os_ = out[1], oi = out[2], ot = out[3], og = out[4]
    cdef int8_t[::1] oc = out[5]
    cdef int64_t[::1] on = out[6]
    cdef Cost c = _unpack(cost)
    cdef PkState st
    st.px = &px_[0]
    st.py = &py_[0]
    st.mx = &mx_[0]
    st.my = &my_[0]
    st.npl = px_.shape[0]
    st.nmi = mx_.shape[0]
    st.c = &c
    st.tol = REFINE_TOL * sqrt(dt)
    st.bridge = bridge
    cdef Py_ssize_t p
    cdef double sq = sqrt(dt), w1
    cdef int64_t steps
    with nogil:
        for p in range(n_paths):
            st.key = path_key(seed, <uint64_t>(p + first_path))
            st.ctr = 0
            st.kmax = sub_key(st.key, MAX_SALT)
            st.kmin = sub_key(st.key, MIN_SALT)
            st.kmid = sub_key(st.key, MID_SALT)
            st.cmid = 0
            st.hp = 0
            st.hm = 0
            st.hg = 0
            st.w = 0.0
            st.hi = 0.0
            st.lo = 0.0
            st.integ = 0.0
            steps = 0
            if unif_at(sub_key(st.key, ZERO_SALT), 0) <= zero_mass:
                ow[p] = 0.0
                os_[p] = 0.0
                oi[p] = 0.0
                ot[p] = 0.0
                og[p] = 0.0
                oc[p] = ZERO_STOP
                on[p] = 0
                continue
            st.ap = table_at(st.px, st.py, st.npl, &st.hp, 0.0)
            st.am = table_at(st.mx, st.my, st.nmi, &st.hm, 0.0)
            st.g0 = cost_at(&c, &st.hg, 0.0)
            while True:
                if steps >= max_steps:
                    st.code = TRUNC_STOP
                    break
                w1 = st.w + sq * znorm(st.key, &st.ctr)
                steps += 1
                st.j = <uint64_t>steps
                if pk_step(&st, st.w, w1, dt):
                    break
                if st.hi > level_cap or st.lo < -level_cap:
                    st.code = TRUNC_STOP
                    break
            if st.hi < st.w:
                st.hi = st.w
            if st.lo > st.w:
                st.lo = st.w
            ow[p] = st.w
            os_[p] = st.hi
            oi[p] = st.lo
            ot[p] = steps * dt
            og[p] = st.integ
            oc[p] = st.code
            on[p] = steps
    return out


def run_cw(const double[::1] nx, const cnp.int64_t[::1] left, const cnp.int64_t[::1] right,
           tuple cost, Py_ssize_t n_paths, double dt, uint64_t seed, double level_cap,
           int64_t max_steps, bint bridge, Py_ssize_t first_path=0):
    """Walk down a binary tree of nested interval exits from the root node 0."""
    out = _outputs(n_paths)
    cdef double[::1] ow = out[0], os_ = out[1], oi = out[2], ot = out[3], og = out[4]
    cdef int8_t[::1] oc = out[5]
    cdef int64_t[::1] on = out[6]
    cdef Cost c = _unpack(cost)
    cdef Py_ssize_t p, hg, node
    cdef uint64_t key, ctr, kmax, kmin
    cdef double sq = sqrt(dt), w, w1, S, I, M, m, a, b, g0, g1, integ, lo_lvl, up_lvl, da, db
    cdef int64_t steps
    cdef int8_t code
    with nogil:
        for p in range(n_paths):
            key = path_key(seed, <uint64_t>(p + first_path))
            kmax = sub_key(key, MAX_SALT)
            kmin = sub_key(key, MIN_SALT)
            ctr = 0
            hg = 0
            node = 0
            w = nx[0]
            S = w if w > 0 else 0.0
            I = w if w < 0 else 0.0
            integ = 0.0
            steps = 0
            code = EXIT_STOP
            g0 = cost_at(&c, &hg, S)
            while left[node] >= 0:
                a = nx[left[node]]
                b = nx[right[node]]
                if steps >= max_steps:
                    code = TRUNC_STOP
                    break
                w1 = w + sq * znorm(key, &ctr)
                steps += 1
                M = w1 if w1 > w else w
                m = w1 if w1 < w else w
                if bridge:
                    up_lvl = S if S < b else b
                    if near(up_lvl, w, w1, dt):
                        M = bridge_max(w, w1, dt, unif_at(kmax, <uint64_t>steps))
                    lo_lvl = I if I > a else a
                    if near(lo_lvl, w, w1, dt):
                        m = bridge_min(w, w1, dt, unif_at(kmin, <uint64_t>steps))
                da = a - m
                db = M - b
                if da >= 0 or db >= 0:
                    # project the exit onto the interval end
                    if da >= db:
                        w1 = a
                        node = left[node]
                    else:
                        w1 = b
                        node = right[node]
                    if M > b:
                        M = b
                    if m < a:
                        m = a
                g1 = g0
                if M > S:
                    S = M
                    g1 = cost_at(&c, &hg, S)
                if m < I:
                    I = m
                integ += 0.5 * (g0 + g1) * dt
                g0 = g1
                w = w1
                if S > level_cap or I < -level_cap:
                    code = TRUNC_STOP
                    break
            ow[p] = w
            os_[p] = S
            oi[p] = I
            ot[p] = steps * dt
            og[p] = integ
            oc[p] = code
            on[p] = steps
    return out


def normals(uint64_t seed, Py_ssize_t path, Py_ssize_t n):
    """First n normals of a path stream (for tests)."""
    cdef uint64_t key = path_key(seed, <uint64_t>path), ctr = 0
    res = np.empty(n)
    cdef double[::1] r = res
    cdef Py_ssize_t j
    for j in range(n):
        r[j] = znorm(key, &ctr)
    return res
