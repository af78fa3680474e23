fn main() {
    println!("ltrlab");
}
