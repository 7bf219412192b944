# Training module init
