# Model module init
