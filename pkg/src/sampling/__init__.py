# Sampling modules
