# CLI package

