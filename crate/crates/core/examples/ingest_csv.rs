// Reading a labeled CSV with a schema and fitting the feature encoding.

use crmtlr::dataset::{ingest_csv, read_table_from};
use crmtlr::Schema;

const SCHEMA: &str = "\
# one line per feature column
stage = categorical
age = continuous
img1 = image
img2 = image
!events = 2
";

const DATA: &str = "\
id,time,event,stage,age,img1,img2
a,1.5,1,II,61,0.2,0.9
b,3.0,0,I,54,0.1,0.4
c,0.7,2,III,70,0.8,0.3
d,2.2,1,II,,0.5,0.5
";

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let data_path = dir.path().join("cohort.csv");
    std::fs::write(&data_path, DATA)?;
    let schema = Schema::parse(SCHEMA)?;

    let (records, encoding) = ingest_csv(&data_path, &schema)?;
    println!(
        "{} subjects, {} features ({} clinical + {} image)",
        records.len(),
        encoding.dim(),
        encoding.clinical_dim(),
        encoding.image_dim()
    );
    for r in &records {
        println!("{:>2} t={:<4} e={} x={:?}", r.id, r.time, r.event, r.features);
    }

    // a stage never seen in training encodes as an all-zero block
    let unseen = read_table_from("id,stage,age,img1,img2\nz,IV,60,0.0,0.0\n".as_bytes(), &schema, false)?;
    let fused = encoding.encode_fused(&unseen[0])?;
    println!("unseen category -> clinical {:?}, image {:?}", fused.clinical, fused.image_features);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
