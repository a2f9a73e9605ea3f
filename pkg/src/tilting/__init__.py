# Tilting modules
