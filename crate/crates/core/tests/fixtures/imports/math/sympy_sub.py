from sympy.ntheory import isprime

print([p for p in range(50) if isprime(p)])
