// Doc-tested guide chapters are wired up here once the book exists.
