"""Direct-formula BLEU-4 / ROUGE-L / CIDEr-D on the fixed toy corpus used by
the acceptance suite. Run once; the printed values are pinned in Rust."""
import math
from collections import Counter

CORPUS = [
    ("vid1", "a man is playing a guitar",
     ["a man is playing a guitar", "a person plays the guitar", "someone is playing music on a guitar"]),
    ("vid2", "a cat is sitting on the table",
     ["a cat sits on a table", "the cat is on the table", "a small cat is sitting on a wooden table"]),
    ("vid3", "two dogs are running in the park",
     ["two dogs run in a park", "dogs are running on the grass", "two dogs are playing in the park"]),
]


def grams(toks, n):
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


def bleu(pairs):
    match = [0] * 4
    tot = [0] * 4
    c = r = 0
    for cand, refs in pairs:
        c += len(cand)
        r += sorted((abs(len(x) - len(cand)), len(x)) for x in refs)[0][1]
        for n in range(1, 5):
            cg = grams(cand, n)
            mx = Counter()
            for ref in refs:
                for g, k in grams(ref, n).items():
                    mx[g] = max(mx[g], k)
            match[n - 1] += sum(min(k, mx[g]) for g, k in cg.items())
            tot[n - 1] += sum(cg.values())
    if min(match) == 0:
        return 0.0
    geo = math.exp(sum(math.log(m / t) for m, t in zip(match, tot)) / 4)
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * geo


def lcs(a, b):
    t = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a)):
        for j in range(len(b)):
            t[i + 1][j + 1] = t[i][j] + 1 if a[i] == b[j] else max(t[i][j + 1], t[i + 1][j])
    return t[-1][-1]


def rouge(pairs, beta=1.2):
    out = []
    for cand, refs in pairs:
        best = 0.0
        for ref in refs:
            l = lcs(cand, ref)
            if l:
                rr, pp = l / len(ref), l / len(cand)
                best = max(best, (1 + beta ** 2) * rr * pp / (rr + beta ** 2 * pp))
        out.append(best)
    return sum(out) / len(out)


def cider(pairs, sigma=6.0):
    df = Counter()
    for _, refs in pairs:
        seen = set()
        for ref in refs:
            for n in range(1, 5):
                seen |= set(grams(ref, n))
        df.update(seen)
    N = len(pairs)

    def vec(toks):
        vs = []
        for n in range(1, 5):
            vs.append({g: k * (math.log(N) - math.log(max(1.0, df[g]))) for g, k in grams(toks, n).items()})
        return vs

    scores = []
    for cand, refs in pairs:
        vh = vec(cand)
        per = []
        for ref in refs:
            vr = vec(ref)
            pen = math.exp(-((len(cand) - len(ref)) ** 2) / (2 * sigma ** 2))
            s = 0.0
            for n in range(4):
                nh = math.sqrt(sum(x * x for x in vh[n].values()))
                nr = math.sqrt(sum(x * x for x in vr[n].values()))
                dot = sum(min(x, vr[n][g]) * vr[n][g] for g, x in vh[n].items() if g in vr[n])
                if nh and nr:
                    s += pen * dot / (nh * nr)
            per.append(s / 4)
        scores.append(10 * sum(per) / len(per))
    return sum(scores) / len(scores)


pairs = [(c.split(), [r.split() for r in refs]) for _, c, refs in CORPUS]
print(f"bleu4  {bleu(pairs)!r}")
print(f"rougel {rouge(pairs)!r}")
print(f"ciderd {cider(pairs)!r}")
