# Empty init file to make core a package
