# Store package

