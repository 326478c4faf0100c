# Batch logistic regression trained by plain gradient descent.
def lra(X, y, alpha, iterations):
    w = np.zeros(X.shape[1])
    i = 0
    while i < iterations:
        pred = 1.0 / (1.0 + np.exp(-(X @ w)))
        grad = X.T @ (pred - y)
        w = w - alpha * grad
        i += 1
    return w
