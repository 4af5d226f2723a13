"""Compare the partial products of the step constants with their closed form.

The closed form used for the threshold is smaller than the true limit of
the partial products by ``2^(4d + 2 gamma)``; this script shows the gap.
"""

from kam_spectra import constants as K

for c, gamma, d, sigma in ((1, 1, 1, 1), (1.03, 1, 1, 1.0), (2, 0.5, 2, 0.5)):
    closed = K.phi_infinity(c, gamma, d, sigma)
    limit = K.phi_limit(c, gamma, d, sigma)
    print(f"c={c} gamma={gamma} d={d} sigma={sigma}")
    for ell in (1, 5, 10, 30):
        print(f"  phi_{ell:<2d} = {K.phi_sequence(ell, c, gamma, d, sigma):.6e}")
    print(f"  true limit {limit:.6e}, closed form {closed:.6e}, ratio {limit / closed:.3f} "
          f"(2^(4d+2gamma) = {2 ** (4 * d + 2 * gamma):.3f})")
    xi = K.xi_value(c, gamma, d, sigma)
    print(f"  xi = {xi:.4e}, inequalities hold: {K.verify_xi_system(xi, c, gamma, d, sigma)}")
