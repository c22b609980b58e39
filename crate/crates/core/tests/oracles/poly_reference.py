"""Symbolic expansion of the collision polynomial for one fixed state pair.

Run with sympy; prints the seven ascending coefficients used in
tests/ttc_properties.rs.
"""
from sympy import Rational, cos, expand, sin, sqrt, symbols, tan, Poly, N

t = symbols("t")

def centre(x, y, th, v, a, d, L):
    k = tan(d) / L
    px = x + v*cos(th)*t + Rational(1, 2)*(a*cos(th) - v**2*sin(th)*k)*t**2 - Rational(1, 12)*a*v*sin(th)*k*t**3
    py = y + v*sin(th)*t + Rational(1, 2)*(a*sin(th) + v**2*cos(th)*k)*t**2 + Rational(1, 12)*a*v*cos(th)*k*t**3
    return px, py

R = Rational

i = centre(R(3, 2), R(-2), R(3, 10), R(9), R(6, 5), R(1, 20), R(27, 10))
j = centre(R(31), R(7, 2), R(-29, 10), R(11), R(-4, 5), R(-3, 40), R(3))
radius = R(23, 10) + R(12, 5)
g = expand((i[0] - j[0])**2 + (i[1] - j[1])**2 - radius**2)
coeffs = Poly(g, t).all_coeffs()[::-1]
for c in coeffs:
    print(N(c, 25))
