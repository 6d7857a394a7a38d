"""A child-process simulator speaking the newline-delimited JSON protocol.

It simulates the sample mean of n draws from N(theta, 1) with a generator
seeded by the request, so repeated requests are reproducible.
"""

import json
import random
import sys


def main():
    for line in sys.stdin:
        msg = json.loads(line)
        if msg["type"] == "hello":
            sys.stdout.write(json.dumps({"type": "ready"}) + "\n")
        elif msg["type"] == "sim":
            rng = random.Random(msg["seed"])
            n = msg["n"]
            mean = msg["theta"][0] + sum(rng.gauss(0.0, 1.0) for _ in range(n)) / n
            sys.stdout.write(json.dumps({"type": "sum", "id": msg["id"], "summary": [mean]}) + "\n")
        elif msg["type"] == "bye":
            break
        sys.stdout.flush()


if __name__ == "__main__":
    main()
