import sys

from dotenv import load_dotenv

from src.cli import run


def main() -> int:
    """Console entry point; environment variables may come from a .env file."""
    load_dotenv()
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
