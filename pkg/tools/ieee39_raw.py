"""Raw IEEE 39-bus (New England) data in MATPOWER column order.

Only the fields the JSON case schema needs are kept. Branch ratings here are
the original rate-A values; ``build_ieee39.py`` replaces them with N-1 derived
limits before writing the fixture.
"""

BASE_MVA = 100.0

# bus_i, type (1=PQ, 2=PV, 3=ref), Pd, Qd, baseKV
BUSES = [
    (1, 1, 0.0, 0.0, 345), (2, 1, 0.0, 0.0, 345), (3, 1, 322.0, 2.4, 345),
    (4, 1, 500.0, 184.0, 345), (5, 1, 0.0, 0.0, 345), (6, 1, 0.0, 0.0, 345),
    (7, 1, 233.8, 84.0, 345), (8, 1, 522.0, 176.0, 345), (9, 1, 0.0, 0.0, 345),
    (10, 1, 0.0, 0.0, 345), (11, 1, 0.0, 0.0, 345), (12, 1, 7.5, 88.0, 345),
    (13, 1, 0.0, 0.0, 345), (14, 1, 0.0, 0.0, 345), (15, 1, 320.0, 153.0, 345),
    (16, 1, 329.0, 32.3, 345), (17, 1, 0.0, 0.0, 345), (18, 1, 158.0, 30.0, 345),
    (19, 1, 0.0, 0.0, 345), (20, 1, 628.0, 103.0, 345), (21, 1, 274.0, 115.0, 345),
    (22, 1, 0.0, 0.0, 345), (23, 1, 247.5, 84.6, 345), (24, 1, 308.6, -92.2, 345),
    (25, 1, 224.0, 47.2, 345), (26, 1, 139.0, 17.0, 345), (27, 1, 281.0, 75.5, 345),
    (28, 1, 206.0, 27.6, 345), (29, 1, 283.5, 26.9, 345), (30, 2, 0.0, 0.0, 345),
    (31, 3, 9.2, 4.6, 345), (32, 2, 0.0, 0.0, 345), (33, 2, 0.0, 0.0, 345),
    (34, 2, 0.0, 0.0, 345), (35, 2, 0.0, 0.0, 345), (36, 2, 0.0, 0.0, 345),
    (37, 2, 0.0, 0.0, 345), (38, 2, 0.0, 0.0, 345), (39, 2, 1104.0, 250.0, 345),
]

# bus, Pg, Qmax, Qmin, Vg, Pmax
GENERATORS = [
    (30, 250.0, 400.0, 140.0, 1.0499, 1040.0),
    (31, 677.871, 300.0, -100.0, 0.982, 646.0),
    (32, 650.0, 300.0, 150.0, 0.9841, 725.0),
    (33, 632.0, 250.0, 0.0, 0.9972, 652.0),
    (34, 508.0, 167.0, 0.0, 1.0123, 508.0),
    (35, 650.0, 300.0, -100.0, 1.0494, 687.0),
    (36, 560.0, 240.0, 0.0, 1.0636, 580.0),
    (37, 540.0, 250.0, 0.0, 1.0275, 564.0),
    (38, 830.0, 300.0, -150.0, 1.0265, 865.0),
    (39, 1000.0, 300.0, -100.0, 1.03, 1100.0),
]

# fbus, tbus, r, x, b, rateA
BRANCHES = [
    (1, 2, 0.0035, 0.0411, 0.6987, 600), (1, 39, 0.001, 0.025, 0.75, 1000),
    (2, 3, 0.0013, 0.0151, 0.2572, 500), (2, 25, 0.007, 0.0086, 0.146, 500),
    (2, 30, 0.0, 0.0181, 0.0, 900), (3, 4, 0.0013, 0.0213, 0.2214, 500),
    (3, 18, 0.0011, 0.0133, 0.2138, 500), (4, 5, 0.0008, 0.0128, 0.1342, 600),
    (4, 14, 0.0008, 0.0129, 0.1382, 500), (5, 6, 0.0002, 0.0026, 0.0434, 1200),
    (5, 8, 0.0008, 0.0112, 0.1476, 900), (6, 7, 0.0006, 0.0092, 0.113, 900),
    (6, 11, 0.0007, 0.0082, 0.1389, 480), (6, 31, 0.0, 0.025, 0.0, 1800),
    (7, 8, 0.0004, 0.0046, 0.078, 900), (8, 9, 0.0023, 0.0363, 0.3804, 900),
    (9, 39, 0.001, 0.025, 1.2, 900), (10, 11, 0.0004, 0.0043, 0.0729, 600),
    (10, 13, 0.0004, 0.0043, 0.0729, 600), (10, 32, 0.0, 0.02, 0.0, 900),
    (12, 11, 0.0016, 0.0435, 0.0, 500), (12, 13, 0.0016, 0.0435, 0.0, 500),
    (13, 14, 0.0009, 0.0101, 0.1723, 600), (14, 15, 0.0018, 0.0217, 0.366, 600),
    (15, 16, 0.0009, 0.0094, 0.171, 600), (16, 17, 0.0007, 0.0089, 0.1342, 600),
    (16, 19, 0.0016, 0.0195, 0.304, 600), (16, 21, 0.0008, 0.0135, 0.2548, 600),
    (16, 24, 0.0003, 0.0059, 0.068, 600), (17, 18, 0.0007, 0.0082, 0.1319, 600),
    (17, 27, 0.0013, 0.0173, 0.3216, 600), (19, 20, 0.0007, 0.0138, 0.0, 900),
    (19, 33, 0.0007, 0.0142, 0.0, 900), (20, 34, 0.0009, 0.018, 0.0, 900),
    (21, 22, 0.0008, 0.014, 0.2565, 900), (22, 23, 0.0006, 0.0096, 0.1846, 600),
    (22, 35, 0.0, 0.0143, 0.0, 900), (23, 24, 0.0022, 0.035, 0.361, 600),
    (23, 36, 0.0005, 0.0272, 0.0, 900), (25, 26, 0.0032, 0.0323, 0.531, 600),
    (25, 37, 0.0006, 0.0232, 0.0, 900), (26, 27, 0.0014, 0.0147, 0.2396, 600),
    (26, 28, 0.0043, 0.0474, 0.7802, 600), (26, 29, 0.0057, 0.0625, 1.029, 600),
    (28, 29, 0.0014, 0.0151, 0.249, 600), (29, 38, 0.0008, 0.0156, 0.0, 1200),
]
