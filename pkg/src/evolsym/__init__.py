"""Symmetry classification and exact solutions for linear evolution
equations u_t = A^r u_r + ... + A^0 u + B of order r > 2 in one space
variable."""

__version__ = "0.1.0"
