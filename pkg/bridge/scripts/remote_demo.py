"""Run a few zero-action episodes against a running control server.

Start the server first, e.g.:

    agiledrive serve --port 5555 --seed 123

then:

    python3 scripts/remote_demo.py --addr 127.0.0.1:5555 --episodes 5
"""
import argparse
import statistics

from drivebridge import RemoteEnvHandle


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--addr", default="127.0.0.1:5555",
                        help="server address as host:port")
    parser.add_argument("--episodes", type=int, default=5)
    parser.add_argument("--timeout", type=float, default=300.0)
    return parser.parse_args()


def main():
    args = parse_args()
    host, _, port = args.addr.rpartition(":")
    returns = []
    with RemoteEnvHandle(host, int(port), timeout=args.timeout) as handle:
        print(f"connected: obs_dim={handle.obs_dim} act_dim={handle.act_dim}")
        for episode in range(args.episodes):
            handle.reset()
            total = 0.0
            steps = 0
            while True:
                _, reward, terminated, truncated, _ = handle.step([0.0, 0.0])
                total += reward
                steps += 1
                if terminated or truncated:
                    break
            returns.append(total)
            end = "terminated" if terminated else "truncated"
            print(f"episode {episode}: return {total:.3f} "
                  f"steps {steps} ({end})")
    print(f"mean return {statistics.fmean(returns):.3f} "
          f"over {len(returns)} episodes")


if __name__ == "__main__":
    main()
