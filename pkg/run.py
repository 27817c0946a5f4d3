import sys


def main():
    """Main entry point: run one CLI command and exit with its status."""
    try:
        from app.cli import main as cli_main
    except ImportError as e:
        print(f"Failed to import the toolkit: {str(e)}")
        print("Install the dependencies with: pip install -r requirements.txt")
        sys.exit(1)
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
