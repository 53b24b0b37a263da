from scipy.special import comb

print(comb(52, 5, exact=True))
