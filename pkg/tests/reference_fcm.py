"""Plain-loop fuzzy C-means used only as a test oracle."""

import math


def reference_fcm(X, U0, m=2.0, max_iters=300, tol=1e-8):
    """Alternate center and membership updates from membership matrix U0 (c x n lists)."""
    n, h, c = len(X), len(X[0]), len(U0)
    U = [list(row) for row in U0]
    prev = math.inf
    J = math.inf
    for _ in range(max_iters):
        V = []
        for i in range(c):
            w = [U[i][j] ** m for j in range(n)]
            tot = sum(w)
            V.append([sum(w[j] * X[j][k] for j in range(n)) / tot for k in range(h)])
        d2 = [[sum((X[j][k] - V[i][k]) ** 2 for k in range(h)) for j in range(n)] for i in range(c)]
        for j in range(n):
            zeros = [i for i in range(c) if d2[i][j] == 0.0]
            if zeros:
                for i in range(c):
                    U[i][j] = (1.0 / len(zeros)) if i in zeros else 0.0
                continue
            for i in range(c):
                s = sum((d2[i][j] / d2[d][j]) ** (1.0 / (m - 1.0)) for d in range(c))
                U[i][j] = 1.0 / s
        J = sum(U[i][j] ** m * d2[i][j] for i in range(c) for j in range(n))
        if abs(prev - J) < tol:
            break
        prev = J
    return J, U, V
