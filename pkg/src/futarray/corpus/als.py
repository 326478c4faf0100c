# Implicit-feedback ALS. R holds observation counts, P the 0/1 preferences.
def update_rows(R, P, Fixed, lam, alpha_c):
    f = Fixed.shape[1]
    Ft = Fixed.T
    FtF = Ft @ Fixed
    reg = lam * np.identity(f)
    Out = np.zeros([R.shape[0], f])
    u = 0
    while u < R.shape[0]:
        c = 1.0 + alpha_c * R[u]
        A = FtF + Ft @ (np.diag(c - 1.0) @ Fixed) + reg
        b = Ft @ (c * P[u])
        Out[u] = np.linalg.solve(A, b)
        u += 1
    return Out


def als(R, P, f, lam, alpha_c, sweeps, seed):
    U = 0.01 * rand([R.shape[0], f], seed)
    V = 0.01 * rand([R.shape[1], f], seed + 1)
    s = 0
    while s < sweeps:
        U = update_rows(R, P, V, lam, alpha_c)
        V = update_rows(R.T, P.T, U, lam, alpha_c)
        s += 1
    return [U, V]
