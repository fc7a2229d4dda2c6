# Method trainers and their registry
