# Evaluation tests
