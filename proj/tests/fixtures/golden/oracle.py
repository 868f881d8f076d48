#!/usr/bin/env python3
"""Independent evaluator for the golden fixture.

Reads manifest.json, labels/*.txt and entropy/*.json from this directory and
writes expected/sweep.csv, expected/metrics.csv, expected/groups.csv and
expected/far_turning_point.txt. All arithmetic is exact (fractions), and the
script refuses to run when an IoU or a printed value sits so close to a
threshold or rounding boundary that double arithmetic could disagree.
"""

import json
import os
import sys
from fractions import Fraction as F

HERE = os.path.dirname(os.path.abspath(__file__))
CATEGORIES = ["car", "bus", "truck", "train", "bike", "motor", "person", "rider",
              "traffic sign", "traffic light", "traffic cone"]
MATCH_IOU = F(1, 2)
AP_THRESHOLDS = [F(50 + 5 * k, 100) for k in range(10)]
RECALL_POINTS = 101
MAX_DET = 100
GROUPS = [
    ("total", lambda t: True),
    ("environment", lambda t: t.split("/")[0] == "environment"),
    ("object", lambda t: t.split("/")[0] == "object"),
    ("natural", lambda t: t.split("/")[0] == "environment" and t.split("/")[2] == "natural"),
    ("handcraft", lambda t: t.split("/")[0] == "environment" and t.split("/")[2] == "handcraft"),
]
GUARD = F(1, 10**9)


def die(msg):
    sys.exit("oracle: " + msg)


def iou(a, b):
    ix = min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0])
    iy = min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return F(0)
    inter = ix * iy
    return inter / (a[2] * a[3] + b[2] * b[3] - inter)


def at_least(v, t):
    if v != 0 and abs(v - t) < GUARD:
        die("IoU %.12f too close to threshold %s" % (float(v), t))
    return v >= t


def fmt(v):
    if v is None:
        return "inf"
    scaled = v * 10**6
    frac = scaled - (scaled.numerator // scaled.denominator)
    if abs(frac - F(1, 2)) < F(1, 10**6):
        die("value %r too close to a rounding boundary" % float(v))
    n = round(scaled)
    sign = "-" if n < 0 else ""
    n = abs(n)
    return "%s%d.%06d" % (sign, n // 10**6, n % 10**6)


def load():
    with open(os.path.join(HERE, "manifest.json")) as fh:
        manifest = json.load(fh)
    frames = []
    for fid in sorted(manifest):
        e = manifest[fid]
        W, H = e["image"]["w"], e["image"]["h"]
        gts = []
        with open(os.path.join(HERE, e["annotations"])) as fh:
            for line in fh:
                if not line.strip():
                    continue
                c, xc, yc, w, h, hard = line.split()
                w, h = F(w) * W, F(h) * H
                gts.append((int(c), (F(xc) * W - w / 2, F(yc) * H - h / 2, w, h), hard == "1"))
        objs = []
        path = os.path.join(HERE, "entropy", fid + ".json")
        if os.path.exists(path):
            with open(path) as fh:
                text = fh.read()
            doc = json.loads(text, parse_float=F, parse_int=F)
            for o in doc["objects"]:
                p = o["p"]
                objs.append({"box": tuple(o["bbox"]), "label": int(o["winning_label"]), "p": p,
                             "conf": max(p), "score": p[int(o["winning_label"])], "h": o["h"]})
        frames.append({"id": fid, "subset": e["subset"], "gt": gts, "objs": objs})
    return frames


def rows_of(frame):
    objs, gts = frame["objs"], frame["gt"]
    order = sorted(range(len(objs)), key=lambda i: (-objs[i]["conf"], i))
    taken = [False] * len(gts)
    match = {}
    for i in order:
        best, best_v = None, None
        for g in range(len(gts)):
            if taken[g]:
                continue
            v = iou(objs[i]["box"], gts[g][1])
            if at_least(v, MATCH_IOU) and (best is None or v > best_v):
                best, best_v = g, v
        if best is not None:
            taken[best] = True
            match[i] = best
    rows = []
    for i, o in enumerate(objs):
        if i in match:
            g = gts[match[i]]
            rows.append({"hard": g[2], "accurate": o["label"] == g[0], "h": o["h"]})
        else:
            rows.append({"hard": False, "accurate": False, "h": o["h"]})
    for g in range(len(gts)):
        if not taken[g]:
            rows.append({"hard": gts[g][2], "accurate": False, "h": None})
    return rows


def protocol(rows, theta):
    S = [r["hard"] or not r["accurate"] for r in rows]
    Wd = [r["h"] is not None and r["h"] > theta for r in rows]
    nS, nW = sum(S), sum(Wd)
    acr = F(sum(1 for s, w in zip(S, Wd) if s and w), nS) if nS else F(1)
    far = F(sum(1 for s, w in zip(S, Wd) if w and not s), nW) if nW else F(0)
    withh = [(r, w) for r, w in zip(rows, Wd) if r["h"] is not None]
    acc = [w for r, w in withh if r["accurate"]]
    inacc = [w for r, w in withh if not r["accurate"]]
    cons = sum(1 for w in acc if not w) + sum(1 for w in inacc if w)
    cqs = F(cons, len(withh)) if withh else F(0)
    p_in = F(sum(inacc), len(inacc)) if inacc else F(0)
    p_acc = F(sum(acc), len(acc)) if acc else F(0)
    if p_acc == 0:
        uqs = None if p_in > 0 else F(0)
    else:
        uqs = p_in / p_acc
    return {"acr": acr, "far": far, "cqs": cqs, "uqs": uqs, "warned": nW}


def ap_and_recall(frames, cat, t):
    ranked = []
    npos = 0
    for f in frames:
        gts = [g for g in f["gt"] if g[0] == cat]
        npos += len(gts)
        dets = [o for o in f["objs"] if o["label"] == cat]
        dets = sorted(enumerate(dets), key=lambda kv: (-kv[1]["score"], kv[0]))[:MAX_DET]
        taken = [False] * len(gts)
        for _, d in dets:
            best, best_v = None, None
            for g in range(len(gts)):
                if taken[g]:
                    continue
                v = iou(d["box"], gts[g][1])
                if at_least(v, t) and (best is None or v > best_v):
                    best, best_v = g, v
            if best is not None:
                taken[best] = True
            ranked.append((d["score"], best is not None))
    if npos == 0 or not ranked:
        return F(0), F(0), npos
    ranked = [r for _, r in sorted(enumerate(ranked), key=lambda kv: (-kv[1][0], kv[0]))]
    curve = []
    tp = 0
    for k, (_, hit) in enumerate(ranked, 1):
        tp += hit
        curve.append((F(tp, npos), F(tp, k)))
    total = F(0)
    for j in range(RECALL_POINTS):
        level = F(j, RECALL_POINTS - 1)
        ok = [p for r, p in curve if r >= level]
        total += max(ok) if ok else 0
    return total / RECALL_POINTS, F(tp, npos), npos


def metrics_rows(frames, group):
    lines = []
    per = []
    for c in range(len(CATEGORIES)):
        ap50, ar50, npos = ap_and_recall(frames, c, F(1, 2))
        if npos == 0:
            continue
        ap5095 = sum(ap_and_recall(frames, c, t)[0] for t in AP_THRESHOLDS) / len(AP_THRESHOLDS)
        per.append((ap50, ar50, ap5095))
        lines.append("%s,%s,%s,%s,%s" % (group, CATEGORIES[c], fmt(ap50), fmt(ar50), fmt(ap5095)))
    n = len(per)
    means = [sum(x[i] for x in per) / n if n else F(0) for i in range(3)]
    lines.append("%s,mean,%s,%s,%s" % (group, fmt(means[0]), fmt(means[1]), fmt(means[2])))
    return lines


def main():
    frames = load()
    out = os.path.join(HERE, "expected")
    os.makedirs(out, exist_ok=True)

    sweep = []
    lines = ["theta_w,acr,far,cqs,uqs"]
    all_rows = [r for f in frames for r in rows_of(f)]
    for k in range(31):
        theta = F(k, 10)
        m = protocol(all_rows, theta)
        sweep.append((theta, m))
        lines.append(",".join([fmt(theta), fmt(m["acr"]), fmt(m["far"]), fmt(m["cqs"]), fmt(m["uqs"])]))
    with open(os.path.join(out, "sweep.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")

    active = [(t, m["far"]) for t, m in sweep if m["warned"] > 0]
    turning = "none"
    if len(active) >= 3:
        lo = min(f for _, f in active)
        i = next(k for k, (_, f) in enumerate(active) if f == lo)
        if any(f > lo for _, f in active[:i]) and any(f > lo for _, f in active[i + 1:]):
            turning = fmt(active[i][0])
    with open(os.path.join(out, "far_turning_point.txt"), "w") as fh:
        fh.write(turning + "\n")

    groups = ["group,acr,far,cqs,uqs"]
    metrics = ["group,category,ap50,ar50,ap5095"]
    for name, member in GROUPS:
        chosen = [f for f in frames if member(f["subset"])]
        m = protocol([r for f in chosen for r in rows_of(f)], F(1))
        groups.append(",".join([name, fmt(m["acr"]), fmt(m["far"]), fmt(m["cqs"]), fmt(m["uqs"])]))
        metrics.extend(metrics_rows(chosen, name))
    with open(os.path.join(out, "groups.csv"), "w") as fh:
        fh.write("\n".join(groups) + "\n")
    with open(os.path.join(out, "metrics.csv"), "w") as fh:
        fh.write("\n".join(metrics) + "\n")


if __name__ == "__main__":
    main()
