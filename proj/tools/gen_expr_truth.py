#!/usr/bin/env python3
"""Freeze Python 3 eval() verdicts for expression strings.

Writes `label<TAB>text` lines: 1 when eval(text) returns without raising, 0 otherwise.
Strings whose evaluation does not finish within the time limit are dropped.

  gen_expr_truth.py exhaustive 3 > expr_len3.tsv
  gen_expr_truth.py random 40000 --seed 7 > expr_random.tsv
"""
import argparse
import itertools
import random
import signal
import sys
import warnings

ALPHABET = "1234567890+-*/%!=<>()"


class Timeout(Exception):
    pass


def _alarm(signum, frame):
    raise Timeout()


def verdict(text, limit=0.25):
    signal.signal(signal.SIGALRM, _alarm)
    result = None
    try:
        signal.setitimer(signal.ITIMER_REAL, limit)
        try:
            eval(text, {"__builtins__": {}}, {})
            result = 1
        except Timeout:
            result = None
        except BaseException:
            result = 0
        finally:
            signal.setitimer(signal.ITIMER_REAL, 0)
    except Timeout:
        result = None
    return result


def gen_expr(rng, depth=0):
    r = rng.random()
    if depth > 4 or r < 0.3:
        n = rng.choice(["0", "00", "1", "2", "7", "10", "12", "99", "01", "3"])
        return n
    if r < 0.45:
        return rng.choice(["-", "+", "--", "-+"]) + gen_expr(rng, depth + 1)
    if r < 0.55:
        return "(" + gen_expr(rng, depth + 1) + ")"
    if r < 0.58:
        return "()"
    if r < 0.61:
        return gen_expr(rng, depth + 1) + "(" + rng.choice(["", "*", "**"]) + gen_expr(rng, depth + 1) + ")"
    op = rng.choice(["+", "-", "*", "/", "//", "%", "**", "<<", ">>", "<", ">", "==", "!=", "<=", ">=",
                     "*", "/", "%", "**"])
    return gen_expr(rng, depth + 1) + op + gen_expr(rng, depth + 1)


def mutate(rng, s):
    s = list(s)
    for _ in range(rng.choice([0, 0, 1, 1, 2])):
        if not s:
            break
        i = rng.randrange(len(s))
        k = rng.random()
        if k < 0.5:
            s[i] = rng.choice(ALPHABET)
        elif k < 0.75:
            del s[i]
        else:
            s.insert(i, rng.choice(ALPHABET))
    return "".join(s)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("mode", choices=["exhaustive", "random"])
    ap.add_argument("n", type=int)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--max-len", type=int, default=25)
    a = ap.parse_args()
    warnings.simplefilter("ignore")
    out = sys.stdout
    out.write("# python %s\n" % sys.version.split()[0])
    if a.mode == "exhaustive":
        for chars in itertools.product(ALPHABET, repeat=a.n):
            s = "".join(chars)
            v = verdict(s)
            if v is not None:
                out.write("%d\t%s\n" % (v, s))
        return
    rng = random.Random(a.seed)
    seen = set()
    while len(seen) < a.n:
        k = rng.random()
        if k < 0.15:
            s = "".join(rng.choice(ALPHABET) for _ in range(rng.randint(1, a.max_len)))
        else:
            s = gen_expr(rng)
            if k < 0.6:
                s = mutate(rng, s)
        if not s or len(s) > a.max_len or s in seen:
            continue
        seen.add(s)
        v = verdict(s)
        if v is not None:
            out.write("%d\t%s\n" % (v, s))


if __name__ == "__main__":
    main()
