# Empty init file to make app a package
