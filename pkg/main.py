import sys

from agent_logit.cli import main


if __name__ == "__main__":
    sys.exit(main())
