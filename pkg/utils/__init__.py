# Beam chain utilities package
