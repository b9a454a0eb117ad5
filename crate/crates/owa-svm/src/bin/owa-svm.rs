fn main() {
    owa_svm::cli::main_entry();
}
