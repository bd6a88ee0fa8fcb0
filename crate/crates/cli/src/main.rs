fn main() {
    println!("ratelab");
}
