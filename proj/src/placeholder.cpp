// anchor for the static library while the code is header-only
