# Observability modules
