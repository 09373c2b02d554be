"""Straight-line reference implementations used as test oracles.

Written without numpy vectorisation or any import from ``mocm`` so that
agreement with the package is independent evidence.
"""

import math


def dominates(a, b):
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def peel_fronts(vectors):
    """Repeated minimal-set removal over all pairs."""
    remaining = list(range(len(vectors)))
    fronts = []
    while remaining:
        front = [i for i in remaining
                 if not any(dominates(vectors[j], vectors[i]) for j in remaining if j != i)]
        fronts.append(front)
        remaining = [i for i in remaining if i not in front]
    return fronts


def eps(p, q):
    return max(a - b for a, b in zip(p, q))


def isde(p, q):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(p, q) if a < b))


def i1(qi, front, vectors, kappa):
    return sum(math.exp(-eps(vectors[qi], vectors[pi]) / kappa) for pi in front if pi != qi)


def i2(qi, front, vectors, sentinel):
    pos = front.index(qi)
    if pos == 0:
        return sentinel
    return min(isde(vectors[qi], vectors[pi]) for pi in front[:pos])


def sort_select(vectors, O, kappa=0.05, sentinel=0.0):
    """Returns the ranked index list, front by front, until >= O collected."""
    out = []
    for front in peel_fronts(vectors):
        if len(out) >= O:
            break
        scored = []
        for qi in front:
            a = i1(qi, front, vectors, kappa)
            b = i2(qi, front, vectors, sentinel)
            scored.append((max(a, b), a, qi))
        out.extend(qi for _, _, qi in sorted(scored))
    return out


def frob2(M):
    return sum(x * x for row in M for x in row)


def matsub(A, B):
    return [[a - b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def matmul(A, B):
    return [[sum(A[i][k] * B[k][j] for k in range(len(B))) for j in range(len(B[0]))] for i in range(len(A))]


def transpose(A):
    return [list(col) for col in zip(*A)]


def penalty(A):
    V = len(A[0])
    g = matmul(transpose(A), A)
    return frob2([[g[i][j] - (1.0 if i == j else 0.0) for j in range(V)] for i in range(V)])


def theta1(F, D, beta):
    return sum(frob2(matsub(f, matmul(d, b))) for f, d, b in zip(F, D, beta)) / len(F)


def theta2_shared(A, G, lam):
    return sum(frob2(matsub(G, a)) for a in A) / len(A) + lam * sum(penalty(a) for a in A)


def cosine(x, g):
    return sum(a * b for a, b in zip(x, g)) / (math.sqrt(sum(a * a for a in x)) * math.sqrt(sum(b * b for b in g)))


def theta3(X, A, labels, C):
    total = 0.0
    for x, a in zip(X, A):
        cos = []
        for c in range(1, C + 1):
            rows = [t for t, lab in enumerate(labels) if lab == c]
            xm = [sum(x[t][v] for t in rows) / len(rows) for v in range(len(x[0]))]
            am = [sum(a[t][v] for t in rows) / len(rows) for v in range(len(a[0]))]
            cos.append(cosine(xm, am))
        total += sum((cos[m] - cos[n]) ** 2 for m in range(C) for n in range(m + 1, C))
    return total / len(X)


def hrf_closed_form(t):
    """Double gamma: gamma(6,1) pdf minus one sixth of gamma(16,1) pdf."""
    if t <= 0:
        return 0.0
    return t ** 5 * math.exp(-t) / math.gamma(6) - t ** 15 * math.exp(-t) / math.gamma(16) / 6.0
