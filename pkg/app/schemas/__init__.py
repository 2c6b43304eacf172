# Empty init file to make schemas a package
