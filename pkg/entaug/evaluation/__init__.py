# Evaluation module init
