"""Generate the bundled CO2 saturation-property table.

Writes ``src/valvest/data/co2_saturation.csv`` (``p_bar,rho_liq,rho_gas,
h_liq,h_gas``; enthalpies in J/kg) on a 0.5 K grid along the saturation
line from 217.0 K to 303.0 K, i.e. pressures ~5.24 to ~71.9 bar, all
strictly inside the (5, 73) bar subcritical band.

Data provenance
---------------
Saturation pressure and the two coexisting densities come from the
saturation-boundary correlations published with the Span & Wagner CO2
equation of state (J. Phys. Chem. Ref. Data 25:1509, 1996, Eqs. 3.13-3.15),
which reproduce the full EOS along the saturation line to well under 0.1 %.
The latent heat is computed from them via the Clapeyron relation

    h_gas - h_liq = T * (dp_sat/dT) * (1/rho_gas - 1/rho_liq)

with the analytic derivative of the vapor-pressure correlation, so the
enthalpy difference is thermodynamically consistent with the p-rho-T data.

Absolute saturated-liquid enthalpy uses the IIR reference state
(h' = 200 kJ/kg for saturated liquid at 0 degC) and a smooth fit
h'(T) = h_c + sum c_i * theta**t_i (theta = 1 - T/T_c) through
IIR-referenced anchors at -56.56/-40/-20/0/+20/+30 degC, exact at the
0 degC reference point.

The script asserts published check values before writing anything, prints
the fit residuals, and is deterministic; rerunning it reproduces the asset
byte for byte.
"""

from __future__ import annotations

import pathlib

import numpy as np

# Critical / triple point constants (Span & Wagner 1996, Table 31).
T_C = 304.1282   # K
P_C = 7.3773e6   # Pa
RHO_C = 467.6    # kg/m3
T_T = 216.592    # K

# Eq. 3.13: vapor pressure.
_VP_A = np.array([-7.0602087, 1.9391218, -1.6463597, -3.2995634])
_VP_T = np.array([1.0, 1.5, 2.0, 4.0])

# Eq. 3.14: saturated liquid density.
_DL_A = np.array([1.9245108, -0.62385555, -0.32731127, 0.39245142])
_DL_T = np.array([0.34, 0.5, 10.0 / 6.0, 11.0 / 6.0])

# Eq. 3.15: saturated vapor density.
_DV_A = np.array([-1.7074879, -0.82274670, -4.6008549, -10.111178, -29.742252])
_DV_T = np.array([0.340, 0.5, 1.0, 7.0 / 3.0, 14.0 / 3.0])


def p_sat(T):
    """Saturation pressure in Pa."""
    theta = 1.0 - T / T_C
    s = sum(a * theta**t for a, t in zip(_VP_A, _VP_T))
    return P_C * np.exp(T_C / T * s)


def dp_sat_dT(T):
    """Analytic d p_sat / dT in Pa/K."""
    theta = 1.0 - T / T_C
    s = sum(a * theta**t for a, t in zip(_VP_A, _VP_T))
    ds = sum(a * t * theta ** (t - 1.0) for a, t in zip(_VP_A, _VP_T))
    # d/dT [T_C/T * s(theta)] with dtheta/dT = -1/T_C
    return p_sat(T) * (-T_C / T**2 * s - ds / T)


def rho_liq(T):
    """Saturated liquid density in kg/m3."""
    theta = 1.0 - T / T_C
    return RHO_C * np.exp(sum(a * theta**t for a, t in zip(_DL_A, _DL_T)))


def rho_gas(T):
    """Saturated vapor density in kg/m3."""
    theta = 1.0 - T / T_C
    return RHO_C * np.exp(sum(a * theta**t for a, t in zip(_DV_A, _DV_T)))


def latent_heat(T):
    """h_gas - h_liq in J/kg via the Clapeyron relation."""
    return T * dp_sat_dT(T) * (1.0 / rho_gas(T) - 1.0 / rho_liq(T))


# IIR-referenced saturated-liquid enthalpy anchors (T in K, h' in J/kg).
# 0 degC is the IIR reference point and is reproduced exactly by the fit.
_H_ANCHORS = [
    (216.592, 80.0e3),   # triple point (stabilizes the cold end)
    (233.15, 112.8e3),   # -40 degC
    (253.15, 154.5e3),   # -20 degC
    (273.15, 200.0e3),   # 0 degC, IIR reference, weighted exact
    (293.15, 257.3e3),   # +20 degC
    (303.15, 304.6e3),   # +30 degC
]
_H_EXPONENTS = [0.34, 1.0, 1.5, 2.0]


def _fit_h_liq():
    """Fit h'(T) = h_c + sum c_i theta**t_i through the anchors.

    Weighted least squares, with the 0 degC IIR reference weighted so the
    fit is exact there to float precision. Returns (coeffs, residuals).
    """
    T = np.array([a[0] for a in _H_ANCHORS])
    h = np.array([a[1] for a in _H_ANCHORS])
    theta = 1.0 - T / T_C
    M = np.column_stack([np.ones_like(theta)] + [theta**t for t in _H_EXPONENTS])
    w = np.where(np.isclose(T, 273.15), 1e8, 1.0)
    coeffs, *_ = np.linalg.lstsq(M * w[:, None], h * w, rcond=None)
    resid = M @ coeffs - h
    return coeffs, resid


_H_COEFFS, _H_RESID = _fit_h_liq()


def h_liq(T):
    """Saturated liquid enthalpy in J/kg (IIR reference state)."""
    theta = np.asarray(1.0 - T / T_C)
    basis = [np.ones_like(theta)] + [theta**t for t in _H_EXPONENTS]
    return sum(c * b for c, b in zip(_H_COEFFS, basis))


def h_gas(T):
    """Saturated vapor enthalpy in J/kg (IIR reference state)."""
    return h_liq(T) + latent_heat(T)


def _self_check():
    # Published check values for the correlations (see module docstring).
    checks = [
        ("p_sat(triple)", p_sat(T_T), 0.51795e6, 3e-3),
        ("p_sat(0C)", p_sat(273.15), 3.4851e6, 1e-3),
        ("p_sat(20C)", p_sat(293.15), 5.7291e6, 2e-3),
        ("rho_liq(triple)", rho_liq(T_T), 1178.46, 5e-3),
        ("rho_liq(0C)", rho_liq(273.15), 927.4, 3e-3),
        ("rho_gas(triple)", rho_gas(T_T), 13.761, 7e-3),
        ("rho_gas(0C)", rho_gas(273.15), 97.65, 5e-3),
        ("latent_heat(0C)", latent_heat(273.15), 230.9e3, 1e-2),
    ]
    for name, got, want, rtol in checks:
        rel = abs(got - want) / abs(want)
        assert rel < rtol, f"{name}: got {got:.6g}, want {want:.6g} (rel {rel:.2e})"
        print(f"  {name:18s} {got:12.5g}  ref {want:12.5g}  rel {rel:.2e}")

    # Anchor-fit quality: exact at 0 degC, within 1.5 kJ/kg elsewhere.
    assert abs(float(h_liq(273.15)) - 200.0e3) < 1.0
    assert np.all(np.abs(_H_RESID) < 1.5e3), _H_RESID
    print(f"  h_liq anchor residuals (J/kg): {np.round(_H_RESID, 1)}")

    # Shape checks over the table range.
    T = np.arange(217.0, 303.01, 0.5)
    assert np.all(np.diff(p_sat(T)) > 0)
    assert np.all(np.diff(rho_liq(T)) < 0)
    assert np.all(np.diff(rho_gas(T)) > 0)
    assert np.all(rho_liq(T) > rho_gas(T))
    assert np.all(np.diff(h_liq(T)) > 0)
    assert np.all(latent_heat(T) > 0)
    # Saturated-liquid heat capacity implied by the fit: ~2 kJ/kg.K at the
    # cold end, rising steeply toward the critical point.
    csat = np.gradient(h_liq(T), T)
    assert np.all(csat[T < 243] > 1.5e3) and np.all(csat[T < 243] < 2.3e3)
    assert np.all(csat > 1.5e3) and np.all(csat[-5:] > 4.0e3)
    # Dew-line cross-checks against IIR-referenced table values.
    for T_chk, want in [(253.15, 437.0e3), (293.15, 409.4e3), (303.15, 367.1e3)]:
        got = float(h_gas(T_chk))
        assert abs(got - want) / want < 8e-3, (T_chk, got, want)
    print("  self-checks passed")


def main():
    out = pathlib.Path(__file__).resolve().parents[1] / "src" / "valvest" / "data" / "co2_saturation.csv"
    print("self-check:")
    _self_check()
    T = np.arange(217.0, 303.01, 0.5)
    rows = np.column_stack([
        p_sat(T) / 1e5,  # bar
        rho_liq(T),
        rho_gas(T),
        h_liq(T),
        h_gas(T),
    ])
    lines = ["p_bar,rho_liq,rho_gas,h_liq,h_gas"]
    for r in rows:
        lines.append(",".join(repr(float(v)) for v in r))
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out} ({len(rows)} rows, {rows[0, 0]:.4f}..{rows[-1, 0]:.4f} bar)")


if __name__ == "__main__":
    main()
