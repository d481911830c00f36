# Cayley package

