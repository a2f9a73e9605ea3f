# Command-line modules
