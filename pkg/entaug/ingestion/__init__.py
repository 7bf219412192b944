# Ingestion module init
