# This module avoids scipy and sympy on purpose.
print('we do not import sympy here')
