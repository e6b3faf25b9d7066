"""Writes the mini experiment: 20 registry XML trials, 3 topics, 12 qrels lines."""
import pathlib, sys
from xml.sax.saxutils import escape

root = pathlib.Path(sys.argv[1])
(root / "corpus").mkdir(parents=True, exist_ok=True)

TRIALS = [
    ("NCT90000001", "Temozolomide and Radiation for Spinal Cord Astrocytoma", ["Astrocytoma", "Spinal Cord Neoplasms"],
     "This study tests temozolomide given with radiation therapy in adults with anaplastic astrocytoma of the spinal cord.",
     "Adults with histologically confirmed anaplastic astrocytoma of the spine. Prior radiation allowed.", "All", "18 Years", "N/A"),
    ("NCT90000002", "Bevacizumab Plus Irinotecan in Recurrent Glioma", ["Glioma", "Astrocytoma"],
     "Bevacizumab (Avastin) combined with irinotecan (CPT-11) for recurrent high grade glioma after temozolomide.",
     "Recurrent anaplastic astrocytoma or glioblastoma. Prior temozolomide required.", "All", "18 Years", "75 Years"),
    ("NCT90000003", "Neuropathic Pain Management After Spinal Tumor Radiation", ["Neuropathic Pain", "Spinal Cord Neoplasms"],
     "Evaluates pregabalin for chronic neuropathic pain and lower extremity weakness in spinal tumor survivors.",
     "Chronic pain after radiation therapy for a spinal tumor.", "All", "18 Years", "N/A"),
    ("NCT90000004", "Bladder Management in Spinal Cord Compression", ["Urinary Retention", "Neurogenic Bladder"],
     "Compares intermittent catheterization with indwelling Foley catheter for urinary retention due to spinal cord lesions.",
     "Urinary retention caused by a spinal cord lesion.", "All", "18 Years", "N/A"),
    ("NCT90000005", "Pediatric Pilocytic Astrocytoma Observation Study", ["Pilocytic Astrocytoma"],
     "Natural history of low grade pilocytic astrocytoma in children.",
     "Children with pilocytic astrocytoma.", "All", "1 Year", "17 Years"),
    ("NCT90000006", "Antibiotics for Community Acquired Pneumonia in Children", ["Pneumonia", "Fever"],
     "Short course amoxicillin for children with fever, cough and lung infiltrates on chest x-ray.",
     "Children aged 2 to 12 with community acquired pneumonia.", "All", "2 Years", "12 Years"),
    ("NCT90000007", "Colorado Tick Fever Surveillance in Travelers", ["Colorado Tick Fever", "Tick-Borne Diseases"],
     "Serologic surveillance of fever and dyspnea in children returning from travel in Colorado.",
     "Fever within two weeks of travel to Colorado.", "All", "1 Year", "N/A"),
    ("NCT90000008", "Rash and Fever in Pediatric Emergency Care", ["Exanthema", "Fever"],
     "Diagnostic algorithm for children presenting with rash and fever to the emergency department.",
     "Children with fever and a new rash.", "All", "0 Years", "17 Years"),
    ("NCT90000009", "Bronchodilators for Acute Dyspnea in Children", ["Dyspnea", "Asthma"],
     "Compares nebulized albuterol schedules for children with acute dyspnea and cough.",
     "Children with acute dyspnea.", "All", "2 Years", "17 Years"),
    ("NCT90000010", "Adult Influenza Vaccine Response", ["Influenza"],
     "Immunogenicity of influenza vaccine in healthy adults.",
     "Healthy adults aged 18 to 64.", "All", "18 Years", "64 Years"),
    ("NCT90000011", "Negative Pressure Wound Therapy for Diabetic Foot Ulcer", ["Diabetic Foot", "Diabetes Mellitus, Type 2"],
     "Negative pressure wound therapy versus standard dressings for non-healing diabetic foot ulcers.",
     "Type 2 diabetes with a foot ulcer present for at least four weeks.", "All", "18 Years", "N/A"),
    ("NCT90000012", "Adherence Coaching in Poorly Controlled Type 2 Diabetes", ["Diabetes Mellitus, Type 2", "Obesity"],
     "Telephone coaching to improve medication adherence and lower HbA1c in obese patients with type 2 diabetes.",
     "HbA1c above 8 percent despite oral therapy.", "All", "30 Years", "75 Years"),
    ("NCT90000013", "Topical Antiseptic Creams for Oozing Skin Lesions", ["Skin Ulcer", "Wound Infection"],
     "Compares silver cream with iodine ointment on oozing chronic skin lesions.",
     "Chronic wound with exudate.", "All", "18 Years", "N/A"),
    ("NCT90000014", "Chest Pain Evaluation in Women", ["Chest Pain", "Acute Coronary Syndrome"],
     "Stress imaging strategy for women presenting with chest pain.",
     "Women with chest pain and no prior coronary disease.", "Female", "40 Years", "N/A"),
    ("NCT90000015", "Insulin Glargine Titration in Obese Women", ["Diabetes Mellitus, Type 2", "Obesity"],
     "Weekly insulin titration algorithm in obese women with persistently elevated HbA1c.",
     "Obese women with type 2 diabetes.", "Female", "40 Years", "80 Years"),
    ("NCT90000016", "Blood Pressure Control With Home Monitoring", ["Hypertension"],
     "Home blood pressure telemonitoring for uncontrolled hypertension.",
     "Adults with uncontrolled hypertension.", "All", "18 Years", "N/A"),
    ("NCT90000017", "Mindfulness for Chronic Low Back Pain", ["Chronic Pain", "Low Back Pain"],
     "Mindfulness training for adults with chronic low back pain.",
     "Low back pain for at least three months.", "All", "18 Years", "70 Years"),
    ("NCT90000018", "High-Dose Steroids in Acute Spinal Cord Injury", ["Spinal Cord Injuries"],
     "Methylprednisolone within eight hours of acute traumatic spinal cord injury.",
     "Acute traumatic spinal cord injury.", "All", "16 Years", "N/A"),
    ("NCT90000019", "Seasonal Allergy Immunotherapy", ["Rhinitis, Allergic, Seasonal"],
     "Sublingual immunotherapy tablets for grass pollen allergy.",
     "Grass pollen allergy for two seasons.", "All", "5 Years", "65 Years"),
    ("NCT90000020", "Smoking Cessation in Hospitalized Adults", ["Tobacco Use Disorder"],
     "Varenicline started during hospitalization for smokers.",
     "Current daily smokers admitted to hospital.", "All", "18 Years", "N/A"),
]

for nct, title, conds, summary, crit, gender, lo, hi in TRIALS:
    c = "\n".join(f"  <condition>{escape(x)}</condition>" for x in conds)
    (root / "corpus" / f"{nct}.xml").write_text(f"""<?xml version="1.0" encoding="UTF-8"?>
<clinical_study>
  <id_info><nct_id>{nct}</nct_id></id_info>
  <brief_title>{escape(title)}</brief_title>
{c}
  <brief_summary><textblock>
    {escape(summary)}
  </textblock></brief_summary>
  <eligibility>
    <criteria><textblock>
      {escape(crit)}
    </textblock></criteria>
    <gender>{gender}</gender>
    <minimum_age>{lo}</minimum_age>
    <maximum_age>{hi}</maximum_age>
  </eligibility>
</clinical_study>
""")

TOPICS = {
    1: "Patient is a 45-year-old man with a history of anaplastic astrocytoma of the spine complicated by severe lower "
       "extremity weakness and urinary retention s/p Foley catheter, high-dose steroids, hypertension, and chronic pain. "
       "The tumor is located in the T-L spine, unresectable anaplastic astrocytoma s/p radiation. Complicated by progressive "
       "lower extremity weakness and urinary retention. The patient initially presented with RLE weakness where his right "
       "knee gave out with difficulty walking and right anterior thigh numbness. MRI showed a spinal cord conus mass which "
       "was biopsied and found to be anaplastic astrocytoma. Therapy included field radiation t10-l1 followed by 11 cycles "
       "of temozolomide 7 days on and 7 days off. This was followed by CPT-11 Weekly x4 with Avastin Q2 weeks/ 2 weeks rest "
       "and repeat cycle.",
    2: "An 8-year-old boy is brought to the ER with fever up to 39 C, dyspnea and cough for 2 days. He denies any rash. "
       "He returned from a camping trip in Colorado last week. Chest x-ray shows bilateral lung infiltrates.",
    3: "A 64-year-old obese woman with type 2 diabetes and persistently elevated HbA1c despite metformin. She reports no "
       "chest pain. A foot ulcer has not healed for six weeks and is now oozing despite topical creams.",
}
(root / "topics.xml").write_text("<topics task=\"mini\">\n" + "".join(
    f"  <topic number=\"{n}\">\n{escape(t)}\n  </topic>\n" for n, t in TOPICS.items()) + "</topics>\n")

QRELS = [
    (1, "NCT90000001", 2), (1, "NCT90000002", 2), (1, "NCT90000005", 1), (1, "NCT90000018", 0),
    (2, "NCT90000006", 2), (2, "NCT90000007", 2), (2, "NCT90000008", 0), (2, "NCT90000010", 1),
    (3, "NCT90000011", 2), (3, "NCT90000012", 2), (3, "NCT90000014", 0), (3, "NCT90000015", 1),
]
(root / "qrels.txt").write_text("".join(f"{t} 0 {d} {g}\n" for t, d, g in QRELS))
