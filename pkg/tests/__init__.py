# Empty init file to make tests a package
