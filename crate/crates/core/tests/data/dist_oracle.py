"""Reference CDF values for the t and F distributions at 40 significant
digits, via mpmath's regularized incomplete beta.

    python3 dist_oracle.py > dist_oracle.tsv
"""
import mpmath as mp

mp.mp.dps = 40


def t_cdf(t, df):
    t, df = mp.mpf(t), mp.mpf(df)
    x = df / (df + t * t)
    tail = mp.betainc(df / 2, mp.mpf(1) / 2, 0, x, regularized=True) / 2
    return 1 - tail if t > 0 else tail


def f_cdf(f, d1, d2):
    f, d1, d2 = mp.mpf(f), mp.mpf(d1), mp.mpf(d2)
    return mp.betainc(d1 / 2, d2 / 2, 0, d1 * f / (d1 * f + d2), regularized=True)


T_POINTS = [
    (-6.5, 3), (-4.0, 1), (-3.2, 36), (-2.5, 7.5), (-2.0, 2), (-1.7, 14), (-1.0, 1), (-0.6, 50),
    (-0.25, 4), (0.0, 5), (0.1, 120), (0.5, 2.5), (0.9, 9), (1.0, 30), (1.25, 36), (1.96, 1000),
    (2.03, 36), (2.5, 3), (3.0, 11), (3.5, 0.5), (4.2, 60), (5.0, 2), (7.0, 6), (12.0, 1), (25.0, 36),
]
F_POINTS = [
    (0.01, 2, 10), (0.1, 1, 1), (0.3, 5, 20), (0.5, 14, 36), (0.75, 3, 3), (0.9, 6, 44), (1.0, 1, 36),
    (1.0, 14, 36), (1.1, 7.5, 12.5), (1.25, 14, 36), (1.5, 2, 2), (1.9, 10, 100), (2.0, 4, 8),
    (2.3, 14, 36), (2.6, 1, 5), (3.0, 2, 2), (3.5, 30, 30), (4.0, 1, 1000), (4.5, 3, 9), (5.0, 20, 4),
    (6.0, 1, 3), (8.0, 14, 36), (10.0, 5, 5), (20.0, 2, 7), (50.0, 1, 2),
]

print("kind\tx\tdf1\tdf2\tcdf")
for t, df in T_POINTS:
    print(f"t\t{t}\t{df}\t-\t{mp.nstr(t_cdf(t, df), 30)}")
for f, d1, d2 in F_POINTS:
    print(f"f\t{f}\t{d1}\t{d2}\t{mp.nstr(f_cdf(f, d1, d2), 30)}")
