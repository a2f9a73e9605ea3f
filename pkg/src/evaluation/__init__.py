# Evaluation modules
