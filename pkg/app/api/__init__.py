# Empty init file to make api a package
