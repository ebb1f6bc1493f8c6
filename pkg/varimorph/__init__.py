def main():
    """Entrypoint für das varimorph-CLI."""
    import sys
    from . import cli
    sys.exit(cli.main())
