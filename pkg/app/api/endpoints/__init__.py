# Empty init file to make endpoints a package
