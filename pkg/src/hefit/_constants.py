"""Frozen numeric constants.

Generated by scripts/regen_constants.py; regenerate with that script
instead of editing by hand."""

# Degree-12 least-squares fit of exp on [-1, 1], ascending power basis.
EXP_POLY = (
    0.9999999999999948,
    0.9999999999996788,
    0.5000000000004744,
    0.1666666666766445,
    0.04166666666019774,
    0.00833333324592319,
    0.0013888889188354027,
    0.00019841302319140728,
    2.4801530417934142e-05,
    2.7551504280360845e-06,
    2.7561173628426655e-07,
    2.5547752396936175e-08,
    2.0934824859870782e-09,
)

EXP_FIT_MAX_ERR = 2.877698079828406e-13

# sup_d d*(1 - w(d)): worst per-round loss of the scaled max tournament,
# measured on a 2e6-point grid (argument of the supremum alongside).
COMP_ROUND_ERR = 0.005100559832320711
COMP_ROUND_ERR_ARG = 0.9128715
