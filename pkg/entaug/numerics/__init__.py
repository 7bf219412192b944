# Entropy, magnitude and loss numerics
