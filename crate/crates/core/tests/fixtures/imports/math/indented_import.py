def solve():
    import sympy as sp
    x = sp.Symbol('x')
    return sp.solve(x**2 - 4, x)

print(solve())
